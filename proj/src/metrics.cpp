#include "onh/metrics.hpp"

#include <cstring>

namespace onh {

std::size_t EnfaceMask::true_count() const {
    std::size_t n = 0;
    for (std::uint8_t c : cells) n += c;
    return n;
}

EnfaceMask enface_rpe_mask(const LabelVolume& labels) {
    const Dims& dims = labels.dims;
    EnfaceMask mask;
    mask.nb = dims.nb;
    mask.na = dims.na;
    mask.cells.assign(static_cast<std::size_t>(dims.nb) * dims.na, 1);
    const auto rpe = static_cast<std::uint8_t>(TissueClass::Rpe);
    for (int b = 0; b < dims.nb; ++b) {
        for (int a = 0; a < dims.na; ++a) {
            for (std::uint8_t c : labels.column(b, a)) {
                if (c == rpe) {
                    mask.cells[static_cast<std::size_t>(b) * dims.na + a] = 0;
                    break;
                }
            }
        }
    }
    return mask;
}

double drusen_score_mm3(const LabelVolume& labels) {
    const auto odd = static_cast<std::uint8_t>(TissueClass::Odd);
    std::size_t count = 0;
    for (std::uint8_t c : labels.data) count += (c == odd);
    return static_cast<double>(count) * labels.spacing.voxel_mm3();
}

double swelling_score_mm3(const LabelVolume& labels) {
    const EnfaceMask mask = enface_rpe_mask(labels);
    const auto prelamina = static_cast<std::uint8_t>(TissueClass::RnflPrelamina);
    const auto odd = static_cast<std::uint8_t>(TissueClass::Odd);
    std::size_t count = 0;
    for (int b = 0; b < labels.dims.nb; ++b) {
        for (int a = 0; a < labels.dims.na; ++a) {
            if (!mask.at(b, a)) continue;
            for (std::uint8_t c : labels.column(b, a))
                count += (c == prelamina || c == odd);
        }
    }
    return static_cast<double>(count) * labels.spacing.voxel_mm3();
}

std::array<double, kNumTissueClasses> class_volumes_mm3(const LabelVolume& labels) {
    std::array<std::size_t, kNumTissueClasses> counts{};
    for (std::uint8_t c : labels.data) ++counts[c];
    std::array<double, kNumTissueClasses> out{};
    const double voxel = labels.spacing.voxel_mm3();
    for (int c = 0; c < kNumTissueClasses; ++c)
        out[c] = static_cast<double>(counts[c]) * voxel;
    return out;
}

LabelVolume remove_small_islands(const LabelVolume& labels, TissueClass cls, int min_voxels) {
    if (min_voxels < 0) throw Error("min_voxels must be >= 0");
    LabelVolume out = labels;
    if (min_voxels <= 1) return out;

    const Dims& dims = labels.dims;
    const auto target = static_cast<std::uint8_t>(cls);
    const std::size_t n = labels.data.size();
    std::vector<std::uint8_t> visited(n, 0);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> component;

    for (std::size_t start = 0; start < n; ++start) {
        if (labels.data[start] != target || visited[start]) continue;
        component.clear();
        stack.assign(1, start);
        visited[start] = 1;
        while (!stack.empty()) {
            const std::size_t idx = stack.back();
            stack.pop_back();
            component.push_back(idx);
            const int d = static_cast<int>(idx % dims.nd);
            const int a = static_cast<int>((idx / dims.nd) % dims.na);
            const int b = static_cast<int>(idx / (static_cast<std::size_t>(dims.nd) * dims.na));
            for (int db = -1; db <= 1; ++db) {
                for (int da = -1; da <= 1; ++da) {
                    for (int dd = -1; dd <= 1; ++dd) {
                        if (db == 0 && da == 0 && dd == 0) continue;
                        const int nb = b + db, na2 = a + da, nd2 = d + dd;
                        if (nb < 0 || nb >= dims.nb || na2 < 0 || na2 >= dims.na ||
                            nd2 < 0 || nd2 >= dims.nd)
                            continue;
                        const std::size_t nidx = labels.index(nb, na2, nd2);
                        if (!visited[nidx] && labels.data[nidx] == target) {
                            visited[nidx] = 1;
                            stack.push_back(nidx);
                        }
                    }
                }
            }
        }
        if (component.size() < static_cast<std::size_t>(min_voxels)) {
            for (std::size_t idx : component)
                out.data[idx] = static_cast<std::uint8_t>(TissueClass::Background);
        }
    }
    return out;
}

EyeFeatures extract_features(const LabelVolume& labels, std::string eye_id,
                             std::string subject_id, std::optional<EyeClass> true_class) {
    EyeFeatures f;
    f.eye_id = std::move(eye_id);
    f.subject_id = std::move(subject_id);
    f.drusen_mm3 = drusen_score_mm3(labels);
    f.swelling_mm3 = swelling_score_mm3(labels);
    f.true_class = true_class;
    validate(f);
    return f;
}

} // namespace onh
