#pragma once

#include <span>
#include <vector>

#include "onh/volume.hpp"

namespace onh {

// Adaptive attenuation compensation of one A-scan:
//   s(d) = I(d)^n                       (contrast exponent n)
//   E(d) = sum_{k >= d} s(k)            (remaining signal energy)
//   O(d) = s(d) / (2 * max(E(d), 1e-t)) (threshold exponent t)
// The denominator floor keeps noise at high depth from being amplified once
// the remaining energy runs out; on [0,1]-normalized input every unclamped
// sample lands in [0, 1/2] and the deepest one with signal lands on 1/2.
struct CompensationParams {
    double contrast_exp = 2.0;
    double threshold_exp = 12.0;
    bool rescale_per_bscan = true; // export convention, see compensate_volume
};

void validate(const CompensationParams& p);

// Input must already be normalized to [0,1] (see normalize_intensity).
// Throws on a non-finite sample.
std::vector<double> compensate_ascan(std::span<const double> ascan,
                                     const CompensationParams& params);

// Applies compensate_ascan to every (b, a) column independently; columns are
// processed in parallel but the result is bit-identical for any n_threads.
// With rescale_per_bscan, each B-scan is divided by its own maximum so slices
// export full-range; score computation never reads intensity data, so this is
// purely a display/export convention.
IntensityVolume compensate_volume(const IntensityVolume& vol,
                                  const CompensationParams& params,
                                  int n_threads = 1);

} // namespace onh
