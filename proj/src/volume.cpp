#include "onh/volume.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace onh {

static_assert(std::endian::native == std::endian::little,
              "raw volume files are little-endian; big-endian hosts are not supported");

void validate_spacing(const VoxelSpacing& s) {
    for (double v : {s.dz_mm, s.dx_mm, s.dy_mm}) {
        if (!std::isfinite(v) || v <= 0.0)
            throw Error("voxel spacing must be strictly positive and finite");
    }
    if (!spacing_in_plausible_range(s)) {
        std::ostringstream os;
        os << "spacing (" << s.dz_mm << ", " << s.dx_mm << ", " << s.dy_mm
           << ") mm is outside the usual ONH raster-scan range";
        log::warn(os.str());
    }
}

bool spacing_in_plausible_range(const VoxelSpacing& s) {
    // Ranges observed across Spectralis ONH raster protocols.
    return s.dz_mm >= 0.0273 && s.dz_mm <= 0.246 &&
           s.dx_mm >= 0.0055 && s.dx_mm <= 0.0131 &&
           s.dy_mm == 0.0039;
}

void validate_dims(const Dims& d) {
    if (d.nb < 1 || d.na < 2 || d.nd < 2)
        throw Error("volume dims must satisfy nb >= 1, na >= 2, nd >= 2");
}

void validate_volume(const IntensityVolume& v) {
    validate_dims(v.dims);
    validate_spacing(v.spacing);
    if (v.data.size() != v.dims.voxels())
        throw Error("intensity data length does not match dims");
    for (float x : v.data) {
        if (!std::isfinite(x) || x < 0.0f)
            throw Error("intensity volume contains a non-finite or negative value");
    }
}

void validate_volume(const LabelVolume& v) {
    validate_dims(v.dims);
    validate_spacing(v.spacing);
    if (v.data.size() != v.dims.voxels())
        throw Error("label data length does not match dims");
    for (std::uint8_t c : v.data) {
        if (c >= kNumTissueClasses)
            throw Error("label volume contains a class code > 8");
    }
}

IntensityVolume make_intensity_volume(Dims dims, VoxelSpacing spacing, std::vector<float> data) {
    IntensityVolume v{dims, spacing, std::move(data)};
    validate_volume(v);
    return v;
}

LabelVolume make_label_volume(Dims dims, VoxelSpacing spacing, std::vector<std::uint8_t> data) {
    LabelVolume v{dims, spacing, std::move(data)};
    validate_volume(v);
    return v;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error("bad metadata value for " + what + ": '" + std::string(s) + "'");
    return v;
}

long parse_int(std::string_view s, const std::string& what) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error("bad metadata value for " + what + ": '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

struct Meta {
    std::string kind;
    Dims dims;
    VoxelSpacing spacing;
    std::string dtype;
    std::uint64_t checksum = 0;
};

Meta read_meta(const std::filesystem::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw Error("cannot open metadata file: " + meta_path.string());
    std::map<std::string, std::string, std::less<>> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(meta_path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        if (!kv.emplace(key, line.substr(eq + 1)).second)
            throw Error(meta_path.string() + ": duplicate key '" + key + "'");
    }
    static const char* required[] = {"format_version", "kind",      "dims",
                                     "spacing_mm",     "dtype",     "byte_order",
                                     "checksum"};
    for (const char* k : required) {
        if (!kv.count(k)) throw Error(meta_path.string() + ": missing key '" + std::string(k) + "'");
    }
    if (kv.size() != std::size(required))
        throw Error(meta_path.string() + ": unknown metadata key present");
    if (kv["format_version"] != "1")
        throw Error(meta_path.string() + ": unsupported format_version '" + kv["format_version"] + "'");
    if (kv["byte_order"] != "little")
        throw Error(meta_path.string() + ": unsupported byte_order '" + kv["byte_order"] + "'");

    Meta m;
    m.kind = kv["kind"];
    m.dtype = kv["dtype"];
    if (m.kind == "intensity") {
        if (m.dtype != "f32") throw Error(meta_path.string() + ": intensity volumes must be dtype=f32");
    } else if (m.kind == "label") {
        if (m.dtype != "u8") throw Error(meta_path.string() + ": label volumes must be dtype=u8");
    } else {
        throw Error(meta_path.string() + ": kind must be 'intensity' or 'label'");
    }

    auto dparts = split(kv["dims"], ',');
    if (dparts.size() != 3) throw Error(meta_path.string() + ": dims must be nb,na,nd");
    m.dims.nb = static_cast<int>(parse_int(dparts[0], "dims"));
    m.dims.na = static_cast<int>(parse_int(dparts[1], "dims"));
    m.dims.nd = static_cast<int>(parse_int(dparts[2], "dims"));

    auto sparts = split(kv["spacing_mm"], ',');
    if (sparts.size() != 3) throw Error(meta_path.string() + ": spacing_mm must be dz,dx,dy");
    m.spacing.dz_mm = parse_double(sparts[0], "spacing_mm");
    m.spacing.dx_mm = parse_double(sparts[1], "spacing_mm");
    m.spacing.dy_mm = parse_double(sparts[2], "spacing_mm");

    const std::string& cs = kv["checksum"];
    if (cs.size() != 16) throw Error(meta_path.string() + ": checksum must be 16 hex digits");
    std::uint64_t sum = 0;
    for (char c : cs) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else throw Error(meta_path.string() + ": checksum must be lowercase hex");
        sum = (sum << 4) | static_cast<std::uint64_t>(d);
    }
    m.checksum = sum;
    return m;
}

std::vector<std::uint8_t> read_raw(const std::filesystem::path& raw_path) {
    std::ifstream in(raw_path, std::ios::binary);
    if (!in) throw Error("cannot open raw data file: " + raw_path.string());
    in.seekg(0, std::ios::end);
    auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw Error("short read from raw data file: " + raw_path.string());
    return bytes;
}

void write_file(const std::filesystem::path& p, const void* data, std::size_t size) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw Error("write failed: " + p.string());
}

void write_meta(const std::filesystem::path& p, const char* kind, const char* dtype,
                const Dims& dims, const VoxelSpacing& sp, std::uint64_t checksum) {
    std::ostringstream os;
    os << "format_version=1\n"
       << "kind=" << kind << "\n"
       << "dims=" << dims.nb << "," << dims.na << "," << dims.nd << "\n"
       << "spacing_mm=" << format_double(sp.dz_mm) << "," << format_double(sp.dx_mm) << ","
       << format_double(sp.dy_mm) << "\n"
       << "dtype=" << dtype << "\n"
       << "byte_order=little\n"
       << "checksum=" << hex64(checksum) << "\n";
    const std::string text = os.str();
    write_file(p, text.data(), text.size());
}

} // namespace

Volume load_volume(const std::filesystem::path& stem) {
    std::filesystem::path meta_path = stem;
    meta_path += ".meta";
    std::filesystem::path raw_path = stem;
    raw_path += ".raw";

    Meta meta = read_meta(meta_path);
    validate_dims(meta.dims);
    std::vector<std::uint8_t> bytes = read_raw(raw_path);

    const std::size_t elem = meta.kind == "intensity" ? 4 : 1;
    if (bytes.size() != meta.dims.voxels() * elem) {
        throw Error(raw_path.string() + ": raw size " + std::to_string(bytes.size()) +
                    " does not match dims (" + std::to_string(meta.dims.voxels() * elem) +
                    " bytes expected)");
    }
    if (fnv1a64(bytes) != meta.checksum)
        throw Error(raw_path.string() + ": checksum mismatch (file corrupted?)");

    if (meta.kind == "intensity") {
        std::vector<float> data(meta.dims.voxels());
        std::memcpy(data.data(), bytes.data(), bytes.size());
        return make_intensity_volume(meta.dims, meta.spacing, std::move(data));
    }
    return make_label_volume(meta.dims, meta.spacing, std::move(bytes));
}

IntensityVolume load_intensity_volume(const std::filesystem::path& stem) {
    Volume v = load_volume(stem);
    if (auto* iv = std::get_if<IntensityVolume>(&v)) return std::move(*iv);
    throw Error(stem.string() + ": expected an intensity volume, found a label volume");
}

LabelVolume load_label_volume(const std::filesystem::path& stem) {
    Volume v = load_volume(stem);
    if (auto* lv = std::get_if<LabelVolume>(&v)) return std::move(*lv);
    throw Error(stem.string() + ": expected a label volume, found an intensity volume");
}

void save_volume(const IntensityVolume& v, const std::filesystem::path& stem) {
    validate_volume(v);
    std::filesystem::path raw_path = stem;
    raw_path += ".raw";
    std::filesystem::path meta_path = stem;
    meta_path += ".meta";

    const std::size_t nbytes = v.data.size() * sizeof(float);
    std::span<const std::uint8_t> bytes{reinterpret_cast<const std::uint8_t*>(v.data.data()), nbytes};
    write_file(raw_path, v.data.data(), nbytes);
    write_meta(meta_path, "intensity", "f32", v.dims, v.spacing, fnv1a64(bytes));
}

void save_volume(const LabelVolume& v, const std::filesystem::path& stem) {
    validate_volume(v);
    std::filesystem::path raw_path = stem;
    raw_path += ".raw";
    std::filesystem::path meta_path = stem;
    meta_path += ".meta";

    write_file(raw_path, v.data.data(), v.data.size());
    write_meta(meta_path, "label", "u8", v.dims, v.spacing, fnv1a64(v.data));
}

Image2D bscan_image(const IntensityVolume& v, int b) {
    Image2D img;
    img.rows = v.dims.nd;
    img.cols = v.dims.na;
    img.dy_mm = v.spacing.dy_mm;
    img.dx_mm = v.spacing.dx_mm;
    img.data.resize(static_cast<std::size_t>(img.rows) * img.cols);
    for (int a = 0; a < v.dims.na; ++a)
        for (int d = 0; d < v.dims.nd; ++d)
            img.at(d, a) = v.at(b, a, d);
    return img;
}

Image2D bscan_image(const LabelVolume& v, int b) {
    Image2D img;
    img.rows = v.dims.nd;
    img.cols = v.dims.na;
    img.dy_mm = v.spacing.dy_mm;
    img.dx_mm = v.spacing.dx_mm;
    img.data.resize(static_cast<std::size_t>(img.rows) * img.cols);
    for (int a = 0; a < v.dims.na; ++a)
        for (int d = 0; d < v.dims.nd; ++d)
            img.at(d, a) = static_cast<float>(v.at(b, a, d));
    return img;
}

Image2D resize_bscan(const Image2D& img, int out_rows, int out_cols, ResizeMode mode) {
    if (img.rows < 2 || img.cols < 2)
        throw Error("resize_bscan requires at least 2 samples per axis");
    if (out_rows < 1 || out_cols < 1)
        throw Error("resize_bscan target must be positive");

    Image2D out;
    out.rows = out_rows;
    out.cols = out_cols;
    out.dy_mm = img.dy_mm * img.rows / out_rows;
    out.dx_mm = img.dx_mm * img.cols / out_cols;
    out.data.resize(static_cast<std::size_t>(out_rows) * out_cols);

    const double ry = static_cast<double>(img.rows) / out_rows;
    const double rx = static_cast<double>(img.cols) / out_cols;

    if (mode == ResizeMode::Nearest) {
        for (int r = 0; r < out_rows; ++r) {
            int sr = std::min(img.rows - 1, static_cast<int>((r + 0.5) * ry));
            for (int c = 0; c < out_cols; ++c) {
                int sc = std::min(img.cols - 1, static_cast<int>((c + 0.5) * rx));
                out.at(r, c) = img.at(sr, sc);
            }
        }
        return out;
    }

    // Bilinear with pixel-center alignment; equal dims reproduce the input.
    for (int r = 0; r < out_rows; ++r) {
        double sy = (r + 0.5) * ry - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(img.rows - 1));
        int y0 = std::min(img.rows - 2, static_cast<int>(sy));
        double fy = sy - y0;
        for (int c = 0; c < out_cols; ++c) {
            double sx = (c + 0.5) * rx - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(img.cols - 1));
            int x0 = std::min(img.cols - 2, static_cast<int>(sx));
            double fx = sx - x0;
            double top = img.at(y0, x0) + fx * (static_cast<double>(img.at(y0, x0 + 1)) - img.at(y0, x0));
            double bot = img.at(y0 + 1, x0) + fx * (static_cast<double>(img.at(y0 + 1, x0 + 1)) - img.at(y0 + 1, x0));
            out.at(r, c) = static_cast<float>(top + fy * (bot - top));
        }
    }
    return out;
}

IntensityVolume normalize_intensity(const IntensityVolume& v) {
    validate_volume(v);
    float max = 0.0f;
    for (float x : v.data) max = std::max(max, x);
    if (max <= 0.0f) throw Error("cannot normalize an all-zero volume (no signal)");

    IntensityVolume out;
    out.dims = v.dims;
    out.spacing = v.spacing;
    out.data.resize(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i] / max;
    return out;
}

} // namespace onh
