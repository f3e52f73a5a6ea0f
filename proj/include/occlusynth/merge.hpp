// Post-processing merge: the measured input scene is kept verbatim, and
// generated points are added only where no measured point lies within the
// overlap threshold.

#pragma once

#include "occlusynth/geom.hpp"

namespace occl {

struct MergeConfig {
  double overlap_threshold = 0.08;  // meters

  void validate() const {
    if (!(overlap_threshold > 0))
      throw error("merge config: threshold must be > 0");
  }
};

/// output = input + every generated point whose nearest input point is at
/// distance >= threshold (strictly closer points are dropped). Provenance
/// is 0 for measured and 1 for generated points. Both clouds must share a
/// frame tag.
PointCloud merge_completion(const PointCloud& input,
                            const PointCloud& generated,
                            const MergeConfig& cfg);

}  // namespace occl
