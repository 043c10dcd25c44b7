#include "octfusion/pipeline.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

namespace octfusion {

PreparedViews prepare_views(const Dataset& ds, const FusionParams& params, bool keep_dense,
                            bool build_trees) {
  if (ds.frames.empty()) throw std::invalid_argument("no views to fuse");
  if (params.max_depth != ds.domain.depth()) {
    throw std::invalid_argument("max_depth does not match the volume resolution");
  }
  const std::size_t count = ds.frames.size();
  const std::size_t batch =
      std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));

  PreparedViews out;
  EstimateAccumulator acc(ds.domain.resolution());
  std::vector<ViewTsdf> work(batch);
  std::vector<ViewTree> trees(batch, ViewTree(0));
  for (std::size_t first = 0; first < count; first += batch) {
    const std::size_t n = std::min(batch, count - first);
    auto job = [&](std::size_t k) {
      const std::size_t i = first + k;
      work[k] = build_view_tsdf(ds.frames[i], ds.cameras[i], ds.domain, params.delta, params.eta);
      if (build_trees) trees[k] = build_octree(work[k].f, &work[k].w, params.tau, params.max_depth);
    };
    if (n == 1) {
      job(0);
    } else {
      std::vector<std::jthread> threads;
      for (std::size_t k = 0; k < n; ++k) threads.emplace_back(job, k);
    }
    // Accumulate in view order so results do not depend on the thread count.
    for (std::size_t k = 0; k < n; ++k) {
      acc.add(work[k]);
      out.dense_bytes += work[k].footprint_bytes();
      if (build_trees) {
        out.tree_bytes += trees[k].memory_bytes();
        out.trees.push_back(std::move(trees[k]));
      }
      if (keep_dense) out.dense.push_back(std::move(work[k]));
    }
  }
  out.estimate = acc.estimate(params.gamma);
  out.weight_sum = acc.weight_sum();
  return out;
}

TriMesh extract_mesh(const Grid3<float>& u, const VolumeDomain& dom, const Grid3<float>& weight_sum) {
  return marching_cubes(u, dom, &weight_sum);
}

}  // namespace octfusion
