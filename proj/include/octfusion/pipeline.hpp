#pragma once

#include <vector>

#include "octfusion/dataset.hpp"
#include "octfusion/fusion.hpp"
#include "octfusion/mesh.hpp"

namespace octfusion {

/// Per-view fields of a dataset plus the accumulated quantities the solvers
/// and the mesher need.
struct PreparedViews {
  /// Dense views; empty unless requested.
  std::vector<ViewTsdf> dense;
  std::vector<ViewTree> trees;
  Grid3<float> estimate;
  Grid3<float> weight_sum;
  /// Bytes the dense f and w grids of all views occupy.
  std::size_t dense_bytes = 0;
  /// Bytes the view trees occupy.
  std::size_t tree_bytes = 0;
};

/// Builds every view's TSDF (in parallel), its view tree and the initial
/// estimate. `params.max_depth` must equal the domain depth.
PreparedViews prepare_views(const Dataset& ds, const FusionParams& params, bool keep_dense,
                            bool build_trees = true);

/// Zero level set of a finest-level field, restricted to cells observed by at
/// least one view.
TriMesh extract_mesh(const Grid3<float>& u, const VolumeDomain& dom, const Grid3<float>& weight_sum);

}  // namespace octfusion
