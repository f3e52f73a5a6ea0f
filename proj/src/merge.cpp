#include "occlusynth/merge.hpp"

#include "occlusynth/kdtree.hpp"
#include "occlusynth/parallel.hpp"

namespace occl {

PointCloud merge_completion(const PointCloud& input,
                            const PointCloud& generated,
                            const MergeConfig& cfg) {
  cfg.validate();
  if (input.empty()) throw error("merge: empty input cloud");
  if (!generated.empty() && generated.frame != input.frame)
    throw error("merge: frame tag mismatch between input and generated");

  PointCloud out;
  out.frame = input.frame;
  out.points = input.points;
  out.provenance.assign(input.size(), 0);

  if (!generated.empty()) {
    const KdIndex index(input);
    std::vector<std::uint8_t> keep(generated.size());
    parallel_for(0, generated.size(), [&](std::size_t i) {
      keep[i] =
          index.nearest(generated.points[i]).distance >= cfg.overlap_threshold
              ? 1
              : 0;
    });
    for (std::size_t i = 0; i < generated.size(); ++i) {
      if (!keep[i]) continue;
      out.points.push_back(generated.points[i]);
      out.provenance.push_back(1);
    }
  }
  return out;
}

}  // namespace occl
