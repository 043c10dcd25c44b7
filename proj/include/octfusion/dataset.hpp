#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "octfusion/synth.hpp"
#include "octfusion/volume.hpp"

namespace octfusion {

/// Portable float map, little-endian, single channel ("Pf").
void write_pfm(const std::filesystem::path& path, const RangeImage& img);
RangeImage read_pfm(const std::filesystem::path& path);

/// 4x4 camera-to-world matrix, row-major, whitespace separated.
void write_pose(const std::filesystem::path& path, const Pose& pose);
Pose read_pose(const std::filesystem::path& path);

/// On-disk layout: intrinsics.txt, domain.txt, frame_%04d.pfm,
/// frame_%04d.pose.txt and, for synthetic scenes, ground_truth.txt.
struct Dataset {
  Intrinsics intrinsics;
  VolumeDomain domain;
  std::vector<Camera> cameras;
  std::vector<RangeImage> frames;
  std::optional<SphereScene> ground_truth;
};

/// Throws std::runtime_error on missing or malformed files.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

SphereScene read_ground_truth(const std::filesystem::path& path);

/// Renders and writes the sphere protocol. Throws std::invalid_argument on
/// bad settings and std::runtime_error when the directory is not writable.
Dataset make_sphere_dataset(const std::filesystem::path& out_dir, const SphereDatasetSpec& spec);

}  // namespace octfusion
