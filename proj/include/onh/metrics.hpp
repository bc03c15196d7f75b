#pragma once

#include <array>
#include <optional>
#include <vector>

#include "onh/features.hpp"
#include "onh/volume.hpp"

namespace onh {

// En-face projection mask over the (b, a) grid.
struct EnfaceMask {
    int nb = 0;
    int na = 0;
    std::vector<std::uint8_t> cells; // 1 = RPE-free column

    bool at(int b, int a) const { return cells[static_cast<std::size_t>(b) * na + a] != 0; }
    std::size_t true_count() const;
};

// A cell is true iff no voxel anywhere along that column carries class 4.
// Because the RPE terminates at Bruch's membrane opening, the true cells are
// the operational interior of the BMO cylinder.
EnfaceMask enface_rpe_mask(const LabelVolume& labels);

// Total volume of ODD regions and conglomerates: class-8 voxel count times
// the physical voxel volume, in mm^3.
double drusen_score_mm3(const LabelVolume& labels);

// Prelamina volume (including ODD regions) inside the BMO cylinder: voxels of
// class 1 or 8 in RPE-free columns, times voxel volume, in mm^3.
double swelling_score_mm3(const LabelVolume& labels);

// Physical volume per class; entries sum to the grid volume.
std::array<double, kNumTissueClasses> class_volumes_mm3(const LabelVolume& labels);

// Relabels to background every connected component (26-connectivity) of the
// given class with fewer than min_voxels voxels. Spurious single-island ODD
// detections in otherwise healthy segmentations are the intended target.
LabelVolume remove_small_islands(const LabelVolume& labels, TissueClass cls, int min_voxels);

EyeFeatures extract_features(const LabelVolume& labels, std::string eye_id,
                             std::string subject_id,
                             std::optional<EyeClass> true_class = std::nullopt);

} // namespace onh
