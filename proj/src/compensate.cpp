#include "onh/compensate.hpp"

#include <cmath>

#include "onh/parallel.hpp"

namespace onh {

void validate(const CompensationParams& p) {
    if (!std::isfinite(p.contrast_exp) || p.contrast_exp <= 0.0)
        throw Error("contrast exponent must be positive");
    if (!std::isfinite(p.threshold_exp) || p.threshold_exp <= 0.0)
        throw Error("threshold exponent must be positive");
}

namespace {

// Core transform on a contiguous column, writing into out (may alias in only
// if both are distinct buffers; callers pass separate storage).
void compensate_column(std::span<const double> in, std::span<double> out,
                       double contrast_exp, double energy_floor) {
    const std::size_t nd = in.size();
    for (std::size_t d = 0; d < nd; ++d) {
        if (!std::isfinite(in[d]))
            throw Error("compensate: non-finite input sample");
        out[d] = contrast_exp == 1.0 ? in[d] : std::pow(in[d], contrast_exp);
    }
    // Suffix energy; accumulating from the bottom keeps E(nd-1) == s(nd-1)
    // exactly, which makes the deepest unclamped sample exactly one half.
    double energy = 0.0;
    for (std::size_t i = nd; i-- > 0;) {
        energy += out[i];
        const double denom = 2.0 * std::max(energy, energy_floor);
        out[i] = out[i] / denom;
    }
}

} // namespace

std::vector<double> compensate_ascan(std::span<const double> ascan,
                                     const CompensationParams& params) {
    validate(params);
    std::vector<double> out(ascan.size());
    compensate_column(ascan, out, params.contrast_exp, std::pow(10.0, -params.threshold_exp));
    return out;
}

IntensityVolume compensate_volume(const IntensityVolume& vol,
                                  const CompensationParams& params,
                                  int n_threads) {
    validate(params);
    validate_volume(vol);
    const Dims& dims = vol.dims;
    const double floor = std::pow(10.0, -params.threshold_exp);

    std::vector<double> work(dims.voxels());
    parallel_for(static_cast<std::size_t>(dims.nb) * dims.na, n_threads, [&](std::size_t col) {
        const std::size_t base = col * dims.nd;
        std::vector<double> in(dims.nd);
        for (int d = 0; d < dims.nd; ++d) in[d] = vol.data[base + d];
        compensate_column(in, {work.data() + base, static_cast<std::size_t>(dims.nd)},
                          params.contrast_exp, floor);
    });

    IntensityVolume out;
    out.dims = dims;
    out.spacing = vol.spacing;
    out.data.resize(vol.data.size());

    if (params.rescale_per_bscan) {
        parallel_for(static_cast<std::size_t>(dims.nb), n_threads, [&](std::size_t b) {
            const std::size_t base = b * static_cast<std::size_t>(dims.na) * dims.nd;
            const std::size_t count = static_cast<std::size_t>(dims.na) * dims.nd;
            double max = 0.0;
            for (std::size_t i = 0; i < count; ++i) max = std::max(max, work[base + i]);
            if (max <= 0.0) {
                for (std::size_t i = 0; i < count; ++i) out.data[base + i] = 0.0f;
            } else {
                for (std::size_t i = 0; i < count; ++i)
                    out.data[base + i] = static_cast<float>(work[base + i] / max);
            }
        });
    } else {
        for (std::size_t i = 0; i < work.size(); ++i)
            out.data[i] = static_cast<float>(work[i]);
    }
    return out;
}

} // namespace onh
