#pragma once

#include <array>
#include <filesystem>
#include <string_view>
#include <vector>

#include "onh/volume.hpp"

namespace onh {

// Axis-aligned ellipsoid in mm; rasterized as tissue class 8.
struct Ellipsoid {
    double cz_mm = 0.0, cx_mm = 0.0, cy_mm = 0.0; // center (B, A, depth)
    double az_mm = 0.0, ax_mm = 0.0, ay_mm = 0.0; // semi-axes
    double volume_mm3() const;
};

// Optics-only cylinder running the full B-scan stack (axis along b), used to
// cast a blood-vessel shadow in rendered intensity. It is not a tissue class;
// vessels are deliberately absent from the label scheme.
struct VesselCylinder {
    double x_mm = 0.0;
    double y_mm = 0.0;
    double radius_mm = 0.0; // 0 disables the vessel
    double mu_mm1 = 0.0;
    double reflectivity = -1.0; // < 0 keeps the underlying class reflectivity
};

struct TissueOptics {
    std::array<double, kNumTissueClasses> reflectivity{};
    std::array<double, kNumTissueClasses> attenuation_mm1{};
};

// Parametric optic-nerve-head phantom with analytically known tissue volumes.
// Geometry: flat slabs for classes 1..6 starting at retina_top_mm; inside the
// BMO cylinder (lateral distance < bmo_radius_mm from the volume's lateral
// center) the slab stack is replaced by prelaminar tissue (class 1) down to
// the lamina cribrosa slab (class 7); the RPE slab therefore has a circular
// hole of exactly bmo_radius_mm. A spherical-cap dome of class 1 with apex
// height swelling_height_mm rises above the retinal surface inside the BMO.
// Drusen ellipsoids must sit inside the BMO cylinder within the prelaminar
// depth band, so every score has a closed form.
struct PhantomSpec {
    Dims dims;
    VoxelSpacing spacing;
    double retina_top_mm = 0.0;
    std::array<double, 6> layer_thickness_mm{}; // classes 1..6
    double lc_thickness_mm = 0.0;               // class 7
    double bmo_radius_mm = 0.0;
    double swelling_height_mm = 0.0;
    std::vector<Ellipsoid> drusen;
    TissueOptics optics;
    double speckle_sigma = 0.0;
    VesselCylinder vessel;

    double prelamina_depth_mm() const; // retina surface to LC top (layers 1..5)
    double stack_depth_mm() const;     // layers 1..6
    double lateral_center_z_mm() const { return dims.nb * spacing.dz_mm / 2.0; }
    double lateral_center_x_mm() const { return dims.na * spacing.dx_mm / 2.0; }
};

void validate(const PhantomSpec& spec);

// Named presets parameterized to land near the score clusters reported for
// the three conditions.
PhantomSpec phantom_preset(std::string_view name); // healthy | odd | papilledema

// Voxel-center rasterization; deterministic and traversal-order independent.
LabelVolume gen_labels(const PhantomSpec& spec, std::uint64_t seed, int n_threads = 1);

struct AnalyticVolumes {
    double drusen_mm3 = 0.0;
    double swelling_mm3 = 0.0;
};

// Closed-form expected scores for a valid spec.
AnalyticVolumes analytic_volumes(const PhantomSpec& spec);

// Volume of a spherical cap with base radius and apex height.
double spherical_cap_volume(double base_radius_mm, double height_mm);

// Single-scattering forward model:
//   I(b,a,d) = R(class) * exp(-2 * sum_{k<d} mu(class_k) * dy) * N(b,a,d)
// with N multiplicative log-normal speckle exp(sigma * g), g ~ N(0,1),
// N == 1 when sigma == 0. Deterministic given seed for any thread count.
IntensityVolume render_intensity(const LabelVolume& labels, const PhantomSpec& spec,
                                 std::uint64_t seed, int n_threads = 1);

PhantomSpec read_phantom_spec(const std::filesystem::path& path);
void write_phantom_spec(const PhantomSpec& spec, const std::filesystem::path& path);
void write_analytic_sidecar(const AnalyticVolumes& av, const std::filesystem::path& path);

} // namespace onh
