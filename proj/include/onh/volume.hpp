#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "onh/common.hpp"

namespace onh {

// Grid steps in mm. dz: between adjacent B-scans, dx: between adjacent
// A-scans within a B-scan, dy: between adjacent depth samples along an A-scan.
struct VoxelSpacing {
    double dz_mm = 0.0;
    double dx_mm = 0.0;
    double dy_mm = 0.0;

    double voxel_mm3() const { return dz_mm * dx_mm * dy_mm; }
};

// Throws on non-finite or non-positive steps; warns (only) when a step falls
// outside the range seen on clinical ONH raster scans.
void validate_spacing(const VoxelSpacing& s);
bool spacing_in_plausible_range(const VoxelSpacing& s);

struct Dims {
    int nb = 0; // B-scans
    int na = 0; // A-scans per B-scan
    int nd = 0; // depth samples per A-scan

    std::size_t voxels() const {
        return static_cast<std::size_t>(nb) * static_cast<std::size_t>(na) *
               static_cast<std::size_t>(nd);
    }
    bool operator==(const Dims&) const = default;
};

void validate_dims(const Dims& d);

// Tissue classes. The numbering is part of the file format and of the score
// definitions (the swelling score tests for RPE = 4, the drusen score counts
// class 8), so it must not be reordered.
enum class TissueClass : std::uint8_t {
    Background = 0,
    RnflPrelamina = 1,
    GclIpl = 2,
    OtherRetina = 3,
    Rpe = 4,
    Choroid = 5,
    Sclera = 6,
    LaminaCribrosa = 7,
    Odd = 8,
};

inline constexpr int kNumTissueClasses = 9;

// Voxels are stored in (b, a, d) order with d fastest, so one A-scan is a
// contiguous run of nd samples.
struct IntensityVolume {
    Dims dims;
    VoxelSpacing spacing;
    std::vector<float> data;

    std::size_t index(int b, int a, int d) const {
        return (static_cast<std::size_t>(b) * dims.na + a) * dims.nd + d;
    }
    float at(int b, int a, int d) const { return data[index(b, a, d)]; }
    std::span<const float> ascan(int b, int a) const {
        return {data.data() + index(b, a, 0), static_cast<std::size_t>(dims.nd)};
    }
};

struct LabelVolume {
    Dims dims;
    VoxelSpacing spacing;
    std::vector<std::uint8_t> data;

    std::size_t index(int b, int a, int d) const {
        return (static_cast<std::size_t>(b) * dims.na + a) * dims.nd + d;
    }
    std::uint8_t at(int b, int a, int d) const { return data[index(b, a, d)]; }
    std::span<const std::uint8_t> column(int b, int a) const {
        return {data.data() + index(b, a, 0), static_cast<std::size_t>(dims.nd)};
    }
};

// Validating constructors; both throw Error on any broken invariant
// (shape, data length, non-finite or negative intensity, label code > 8).
IntensityVolume make_intensity_volume(Dims dims, VoxelSpacing spacing, std::vector<float> data);
LabelVolume make_label_volume(Dims dims, VoxelSpacing spacing, std::vector<std::uint8_t> data);

void validate_volume(const IntensityVolume& v);
void validate_volume(const LabelVolume& v);

// --- File I/O -------------------------------------------------------------
//
// A volume on disk is a pair of files:
//   <stem>.meta  UTF-8 text, key=value lines: format_version, kind, dims,
//                spacing_mm, dtype, byte_order, checksum
//   <stem>.raw   voxels in (b,a,d) order, d fastest; little-endian f32 for
//                intensity volumes, u8 for label volumes
// The checksum key holds the FNV-1a 64-bit hash of the raw bytes as 16 hex
// digits; load_volume refuses silently corrupted data.

using Volume = std::variant<IntensityVolume, LabelVolume>;

Volume load_volume(const std::filesystem::path& stem);
IntensityVolume load_intensity_volume(const std::filesystem::path& stem);
LabelVolume load_label_volume(const std::filesystem::path& stem);
void save_volume(const IntensityVolume& v, const std::filesystem::path& stem);
void save_volume(const LabelVolume& v, const std::filesystem::path& stem);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// --- B-scan images and resampling ------------------------------------------

// One B-scan as a 2D image: rows run along depth, columns along A-scans.
struct Image2D {
    int rows = 0; // depth samples
    int cols = 0; // A-scans
    double dy_mm = 0.0;
    double dx_mm = 0.0;
    std::vector<float> data; // row-major

    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

enum class ResizeMode { Nearest, Bilinear };

Image2D bscan_image(const IntensityVolume& v, int b);
Image2D bscan_image(const LabelVolume& v, int b); // codes as exact floats

// Axes are scaled independently; the returned image carries the rescaled
// spacing (dy' = dy*rows/out_rows, dx' = dx*cols/out_cols). Nearest is the
// mode for label images, bilinear for intensity.
Image2D resize_bscan(const Image2D& img, int out_rows = 256, int out_cols = 256,
                     ResizeMode mode = ResizeMode::Bilinear);

// Divides by the volume maximum; output range [0,1] with max exactly 1.
// Throws on an all-zero volume.
IntensityVolume normalize_intensity(const IntensityVolume& v);

} // namespace onh
