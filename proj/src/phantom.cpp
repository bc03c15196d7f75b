#include "onh/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "onh/parallel.hpp"
#include "onh/rng.hpp"
#include "onh/text.hpp"

namespace onh {

double Ellipsoid::volume_mm3() const {
    return (4.0 / 3.0) * std::numbers::pi * az_mm * ax_mm * ay_mm;
}

double PhantomSpec::prelamina_depth_mm() const {
    double t = 0.0;
    for (int i = 0; i < 5; ++i)
        t += layer_thickness_mm[i];
    return t;
}

double PhantomSpec::stack_depth_mm() const {
    double t = 0.0;
    for (double v : layer_thickness_mm)
        t += v;
    return t;
}

double spherical_cap_volume(double base_radius_mm, double height_mm) {
    if (height_mm <= 0.0)
        return 0.0;
    return std::numbers::pi * height_mm *
           (3.0 * base_radius_mm * base_radius_mm + height_mm * height_mm) / 6.0;
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok)
        throw Error("phantom spec: " + msg);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

} // namespace

void validate(const PhantomSpec& s) {
    validate_dims(s.dims);
    validate_spacing(s.spacing);
    require(finite_nonneg(s.retina_top_mm), "retina_top_mm must be finite and >= 0");
    for (double t : s.layer_thickness_mm)
        require(finite_nonneg(t), "layer thicknesses must be finite and >= 0");
    require(finite_nonneg(s.lc_thickness_mm), "lc_mm must be finite and >= 0");
    require(finite_nonneg(s.bmo_radius_mm), "bmo_radius_mm must be finite and >= 0");
    require(finite_nonneg(s.swelling_height_mm), "swelling_height_mm must be finite and >= 0");
    require(finite_nonneg(s.speckle_sigma), "speckle_sigma must be finite and >= 0");
    for (int c = 0; c < kNumTissueClasses; ++c) {
        require(finite_nonneg(s.optics.reflectivity[c]), "reflectivity must be finite and >= 0");
        require(finite_nonneg(s.optics.attenuation_mm1[c]),
                "attenuation_mm1 must be finite and >= 0");
    }

    const double extent_z = s.dims.nb * s.spacing.dz_mm;
    const double extent_x = s.dims.na * s.spacing.dx_mm;
    const double extent_y = s.dims.nd * s.spacing.dy_mm;
    require(s.retina_top_mm + s.stack_depth_mm() <= extent_y,
            "layer stack extends below the volume");
    require(s.retina_top_mm + s.prelamina_depth_mm() + s.lc_thickness_mm <= extent_y,
            "lamina cribrosa extends below the volume");
    if (s.swelling_height_mm > 0.0) {
        require(s.bmo_radius_mm > 0.0, "swelling dome needs bmo_radius_mm > 0");
        require(s.retina_top_mm - s.swelling_height_mm >= 0.0,
                "swelling dome extends above the volume");
        // taller than a hemisphere the cap would bulge laterally past the BMO
        // cylinder and the closed-form volume would no longer match the raster
        require(s.swelling_height_mm <= s.bmo_radius_mm,
                "swelling dome height must not exceed the BMO radius");
    }
    if (s.bmo_radius_mm > 0.0)
        require(s.bmo_radius_mm <= std::min(extent_z, extent_x) / 2.0,
                "BMO disc extends beyond the lateral bounds");

    const double zc = s.lateral_center_z_mm();
    const double xc = s.lateral_center_x_mm();
    const double prelamina_top = s.retina_top_mm;
    const double prelamina_bot = s.retina_top_mm + s.prelamina_depth_mm();
    for (const auto& e : s.drusen) {
        require(e.az_mm > 0.0 && e.ax_mm > 0.0 && e.ay_mm > 0.0,
                "drusen semi-axes must be > 0");
        require(std::isfinite(e.cz_mm) && std::isfinite(e.cx_mm) && std::isfinite(e.cy_mm),
                "drusen center must be finite");
        const double lateral = std::hypot(e.cz_mm - zc, e.cx_mm - xc);
        require(lateral + std::max(e.az_mm, e.ax_mm) <= s.bmo_radius_mm,
                "drusen must lie inside the BMO cylinder");
        require(e.cy_mm - e.ay_mm >= prelamina_top && e.cy_mm + e.ay_mm <= prelamina_bot,
                "drusen must lie inside the prelaminar depth band");
    }
    for (std::size_t i = 0; i < s.drusen.size(); ++i) {
        const auto& a = s.drusen[i];
        const double ra = std::max({a.az_mm, a.ax_mm, a.ay_mm});
        for (std::size_t j = i + 1; j < s.drusen.size(); ++j) {
            const auto& b = s.drusen[j];
            const double rb = std::max({b.az_mm, b.ax_mm, b.ay_mm});
            const double d = std::sqrt((a.cz_mm - b.cz_mm) * (a.cz_mm - b.cz_mm) +
                                       (a.cx_mm - b.cx_mm) * (a.cx_mm - b.cx_mm) +
                                       (a.cy_mm - b.cy_mm) * (a.cy_mm - b.cy_mm));
            require(d > ra + rb, "drusen bounding spheres must not overlap");
        }
    }

    require(finite_nonneg(s.vessel.radius_mm), "vessel radius must be finite and >= 0");
    if (s.vessel.radius_mm > 0.0) {
        require(finite_nonneg(s.vessel.mu_mm1), "vessel mu_mm1 must be finite and >= 0");
        require(std::isfinite(s.vessel.reflectivity), "vessel reflectivity must be finite");
        require(s.vessel.x_mm - s.vessel.radius_mm >= 0.0 &&
                    s.vessel.x_mm + s.vessel.radius_mm <= extent_x,
                "vessel extends beyond the lateral bounds");
        require(s.vessel.y_mm - s.vessel.radius_mm >= 0.0 &&
                    s.vessel.y_mm + s.vessel.radius_mm <= extent_y,
                "vessel extends beyond the depth range");
    }
}

PhantomSpec phantom_preset(std::string_view name) {
    PhantomSpec s;
    s.dims = {80, 200, 640};
    s.spacing = {0.03, 0.012, 0.0039};
    s.retina_top_mm = 1.3;
    s.layer_thickness_mm = {0.10, 0.10, 0.15, 0.05, 0.20, 0.25};
    s.lc_thickness_mm = 0.25;
    s.optics.reflectivity = {0.02, 0.55, 0.35, 0.45, 0.90, 0.40, 0.70, 0.60, 0.15};
    s.optics.attenuation_mm1 = {0.01, 1.0, 1.5, 1.2, 4.0, 2.5, 1.5, 1.2, 0.5};
    s.speckle_sigma = 0.0;

    if (name == "healthy") {
        s.bmo_radius_mm = 0.8078;
        s.swelling_height_mm = 0.0;
    } else if (name == "papilledema") {
        s.bmo_radius_mm = 0.95;
        s.swelling_height_mm = 0.9262;
    } else if (name == "odd") {
        s.bmo_radius_mm = 0.75;
        s.layer_thickness_mm[4] = 0.50; // deeper cup leaves room for the druse
        s.swelling_height_mm = 0.4025;
        Ellipsoid e;
        e.cz_mm = s.lateral_center_z_mm();
        e.cx_mm = s.lateral_center_x_mm();
        e.cy_mm = s.retina_top_mm + 0.43;
        e.az_mm = 0.62;
        e.ax_mm = 0.62;
        e.ay_mm = 0.41;
        s.drusen.push_back(e);
    } else {
        throw Error("unknown phantom preset '" + std::string(name) +
                    "' (expected healthy, odd, or papilledema)");
    }
    validate(s);
    return s;
}

AnalyticVolumes analytic_volumes(const PhantomSpec& s) {
    validate(s);
    AnalyticVolumes av;
    for (const auto& e : s.drusen)
        av.drusen_mm3 += e.volume_mm3();

    const double disc = std::numbers::pi * s.bmo_radius_mm * s.bmo_radius_mm;
    av.swelling_mm3 = spherical_cap_volume(s.bmo_radius_mm, s.swelling_height_mm) +
                      disc * s.prelamina_depth_mm();
    if (s.layer_thickness_mm[3] == 0.0) {
        // no RPE slab: the class-1 ring outside the BMO is RPE-free too
        const double total = s.dims.nb * s.spacing.dz_mm * s.dims.na * s.spacing.dx_mm;
        av.swelling_mm3 += (total - disc) * s.layer_thickness_mm[0];
    }
    return av;
}

namespace {

struct ColumnGeometry {
    const PhantomSpec& s;
    double zc, xc;
    double dome_sphere_r;   // radius of the sphere carrying the cap
    double dome_center_off; // sphere center depth below the retina surface
    std::array<double, 7> cum; // cum[0]=retina top, cum[k]=bottom of layer k
    double lc_bot;

    explicit ColumnGeometry(const PhantomSpec& spec) : s(spec) {
        zc = s.lateral_center_z_mm();
        xc = s.lateral_center_x_mm();
        const double h = s.swelling_height_mm;
        const double rho = s.bmo_radius_mm;
        if (h > 0.0) {
            dome_sphere_r = (rho * rho + h * h) / (2.0 * h);
            dome_center_off = dome_sphere_r - h;
        } else {
            dome_sphere_r = 0.0;
            dome_center_off = 0.0;
        }
        cum[0] = s.retina_top_mm;
        for (int k = 1; k <= 6; ++k)
            cum[k] = cum[k - 1] + s.layer_thickness_mm[k - 1];
        lc_bot = cum[5] + s.lc_thickness_mm; // cum[5] is the LC top (below layer 5)
    }
};

// Tissue class at a voxel center, drusen taking precedence.
class ColumnClassifier {
public:
    ColumnClassifier(const ColumnGeometry& g, double z_mm, double x_mm) : g_(g) {
        const double r = std::hypot(z_mm - g.zc, x_mm - g.xc);
        inside_bmo_ = r < g.s.bmo_radius_mm;
        dome_top_ = g.s.retina_top_mm;
        if (inside_bmo_ && g.s.swelling_height_mm > 0.0) {
            const double elev =
                std::sqrt(std::max(0.0, g.dome_sphere_r * g.dome_sphere_r - r * r)) -
                g.dome_center_off;
            if (elev > 0.0)
                dome_top_ = g.s.retina_top_mm - elev;
        }
        for (const auto& e : g.s.drusen) {
            const double qz = (z_mm - e.cz_mm) / e.az_mm;
            const double qx = (x_mm - e.cx_mm) / e.ax_mm;
            const double q = qz * qz + qx * qx;
            if (q < 1.0) {
                const double half = e.ay_mm * std::sqrt(1.0 - q);
                drusen_spans_.push_back({e.cy_mm - half, e.cy_mm + half});
            }
        }
    }

    std::uint8_t operator()(double y_mm) const {
        for (const auto& sp : drusen_spans_)
            if (y_mm > sp.first && y_mm < sp.second)
                return static_cast<std::uint8_t>(TissueClass::Odd);
        const auto& cum = g_.cum;
        if (inside_bmo_) {
            if (y_mm >= dome_top_ && y_mm < cum[5])
                return static_cast<std::uint8_t>(TissueClass::RnflPrelamina);
            if (y_mm >= cum[5] && y_mm < g_.lc_bot)
                return static_cast<std::uint8_t>(TissueClass::LaminaCribrosa);
            return static_cast<std::uint8_t>(TissueClass::Background);
        }
        if (y_mm >= cum[0] && y_mm < cum[6]) {
            for (int k = 1; k <= 6; ++k)
                if (y_mm < cum[k])
                    return static_cast<std::uint8_t>(k);
        }
        return static_cast<std::uint8_t>(TissueClass::Background);
    }

private:
    const ColumnGeometry& g_;
    bool inside_bmo_ = false;
    double dome_top_ = 0.0;
    std::vector<std::pair<double, double>> drusen_spans_;
};

} // namespace

LabelVolume gen_labels(const PhantomSpec& s, std::uint64_t /*seed*/, int n_threads) {
    validate(s);
    LabelVolume vol =
        make_label_volume(s.dims, s.spacing, std::vector<std::uint8_t>(s.dims.voxels(), 0));
    const ColumnGeometry geom(s);
    const std::size_t n_cols =
        static_cast<std::size_t>(s.dims.nb) * static_cast<std::size_t>(s.dims.na);
    parallel_for(n_cols, n_threads, [&](std::size_t col) {
        const int b = static_cast<int>(col / static_cast<std::size_t>(s.dims.na));
        const int a = static_cast<int>(col % static_cast<std::size_t>(s.dims.na));
        const double z = (b + 0.5) * s.spacing.dz_mm;
        const double x = (a + 0.5) * s.spacing.dx_mm;
        const ColumnClassifier classify(geom, z, x);
        std::uint8_t* column = vol.data.data() + col * static_cast<std::size_t>(s.dims.nd);
        for (int d = 0; d < s.dims.nd; ++d)
            column[d] = classify((d + 0.5) * s.spacing.dy_mm);
    });
    return vol;
}

IntensityVolume render_intensity(const LabelVolume& labels, const PhantomSpec& s,
                                 std::uint64_t seed, int n_threads) {
    validate(s);
    validate_volume(labels);
    if (!(labels.dims.nb == s.dims.nb && labels.dims.na == s.dims.na &&
          labels.dims.nd == s.dims.nd))
        throw Error("render: label volume dimensions do not match the phantom spec");

    IntensityVolume out = make_intensity_volume(labels.dims, labels.spacing,
                                                std::vector<float>(labels.data.size(), 0.0f));
    const double dy = s.spacing.dy_mm;
    const bool vessel_on = s.vessel.radius_mm > 0.0;
    const double vr2 = s.vessel.radius_mm * s.vessel.radius_mm;
    const std::size_t n_cols =
        static_cast<std::size_t>(s.dims.nb) * static_cast<std::size_t>(s.dims.na);

    parallel_for(n_cols, n_threads, [&](std::size_t col) {
        const int a = static_cast<int>(col % static_cast<std::size_t>(s.dims.na));
        const double x = (a + 0.5) * s.spacing.dx_mm;
        const double vdx2 = (x - s.vessel.x_mm) * (x - s.vessel.x_mm);
        const bool vessel_hits_col = vessel_on && vdx2 < vr2;
        Rng rng(derive_seed(seed, "speckle", col));
        const std::uint8_t* lab = labels.data.data() + col * static_cast<std::size_t>(s.dims.nd);
        float* dst = out.data.data() + col * static_cast<std::size_t>(s.dims.nd);
        double optical_depth = 0.0;
        for (int d = 0; d < s.dims.nd; ++d) {
            const std::uint8_t cls = lab[d];
            double mu = s.optics.attenuation_mm1[cls];
            double refl = s.optics.reflectivity[cls];
            if (vessel_hits_col) {
                const double y = (d + 0.5) * dy;
                if (vdx2 + (y - s.vessel.y_mm) * (y - s.vessel.y_mm) < vr2) {
                    mu = s.vessel.mu_mm1;
                    if (s.vessel.reflectivity >= 0.0)
                        refl = s.vessel.reflectivity;
                }
            }
            double v = refl * std::exp(-2.0 * optical_depth);
            if (s.speckle_sigma > 0.0)
                v *= std::exp(s.speckle_sigma * rng.normal());
            dst[d] = static_cast<float>(v);
            optical_depth += mu * dy;
        }
    });
    return out;
}

namespace {

std::string join_doubles(const double* v, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i)
            out += ',';
        out += format_double(v[i]);
    }
    return out;
}

} // namespace

void write_phantom_spec(const PhantomSpec& s, const std::filesystem::path& path) {
    validate(s);
    std::ostringstream os;
    os << "dims=" << s.dims.nb << "," << s.dims.na << "," << s.dims.nd << "\n";
    const double sp[3] = {s.spacing.dz_mm, s.spacing.dx_mm, s.spacing.dy_mm};
    os << "spacing_mm=" << join_doubles(sp, 3) << "\n";
    os << "retina_top_mm=" << format_double(s.retina_top_mm) << "\n";
    os << "layer_mm=" << join_doubles(s.layer_thickness_mm.data(), 6) << "\n";
    os << "lc_mm=" << format_double(s.lc_thickness_mm) << "\n";
    os << "bmo_radius_mm=" << format_double(s.bmo_radius_mm) << "\n";
    os << "swelling_height_mm=" << format_double(s.swelling_height_mm) << "\n";
    for (const auto& e : s.drusen) {
        const double v[6] = {e.cz_mm, e.cx_mm, e.cy_mm, e.az_mm, e.ax_mm, e.ay_mm};
        os << "drusen=" << join_doubles(v, 6) << "\n";
    }
    os << "reflectivity=" << join_doubles(s.optics.reflectivity.data(), kNumTissueClasses)
       << "\n";
    os << "attenuation_mm1="
       << join_doubles(s.optics.attenuation_mm1.data(), kNumTissueClasses) << "\n";
    os << "speckle_sigma=" << format_double(s.speckle_sigma) << "\n";
    if (s.vessel.radius_mm > 0.0) {
        const double v[5] = {s.vessel.x_mm, s.vessel.y_mm, s.vessel.radius_mm,
                             s.vessel.mu_mm1, s.vessel.reflectivity};
        os << "vessel=" << join_doubles(v, 5) << "\n";
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string() + " for writing");
    f << os.str();
    if (!f.flush())
        throw Error("write failed: " + path.string());
}

PhantomSpec read_phantom_spec(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string());
    PhantomSpec s;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    const std::string ctx = path.filename().string();
    while (std::getline(f, line)) {
        ++lineno;
        std::string_view sv = trim(line);
        if (sv.empty() || sv.front() == '#')
            continue;
        const std::size_t eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw Error(ctx + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key(trim(sv.substr(0, eq)));
        const std::string_view val = trim(sv.substr(eq + 1));
        const std::string where = ctx + ":" + std::to_string(lineno) + " (" + key + ")";
        if (key != "drusen" && ++seen[key] > 1)
            throw Error(where + ": duplicate key");

        if (key == "dims") {
            auto v = parse_double_list(val, where);
            if (v.size() != 3)
                throw Error(where + ": expected nb,na,nd");
            for (double d : v)
                if (d != std::floor(d) || d < 1)
                    throw Error(where + ": dims must be positive integers");
            s.dims = {static_cast<int>(v[0]), static_cast<int>(v[1]), static_cast<int>(v[2])};
        } else if (key == "spacing_mm") {
            auto v = parse_double_list(val, where);
            if (v.size() != 3)
                throw Error(where + ": expected dz,dx,dy");
            s.spacing = {v[0], v[1], v[2]};
        } else if (key == "retina_top_mm") {
            s.retina_top_mm = parse_double(val, where);
        } else if (key == "layer_mm") {
            auto v = parse_double_list(val, where);
            if (v.size() != 6)
                throw Error(where + ": expected 6 thicknesses (classes 1..6)");
            std::copy(v.begin(), v.end(), s.layer_thickness_mm.begin());
        } else if (key == "lc_mm") {
            s.lc_thickness_mm = parse_double(val, where);
        } else if (key == "bmo_radius_mm") {
            s.bmo_radius_mm = parse_double(val, where);
        } else if (key == "swelling_height_mm") {
            s.swelling_height_mm = parse_double(val, where);
        } else if (key == "drusen") {
            auto v = parse_double_list(val, where);
            if (v.size() != 6)
                throw Error(where + ": expected cz,cx,cy,az,ax,ay");
            s.drusen.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
        } else if (key == "reflectivity") {
            auto v = parse_double_list(val, where);
            if (v.size() != kNumTissueClasses)
                throw Error(where + ": expected 9 values (classes 0..8)");
            std::copy(v.begin(), v.end(), s.optics.reflectivity.begin());
        } else if (key == "attenuation_mm1") {
            auto v = parse_double_list(val, where);
            if (v.size() != kNumTissueClasses)
                throw Error(where + ": expected 9 values (classes 0..8)");
            std::copy(v.begin(), v.end(), s.optics.attenuation_mm1.begin());
        } else if (key == "speckle_sigma") {
            s.speckle_sigma = parse_double(val, where);
        } else if (key == "vessel") {
            auto v = parse_double_list(val, where);
            if (v.size() != 4 && v.size() != 5)
                throw Error(where + ": expected x,y,radius,mu[,reflectivity]");
            s.vessel.x_mm = v[0];
            s.vessel.y_mm = v[1];
            s.vessel.radius_mm = v[2];
            s.vessel.mu_mm1 = v[3];
            s.vessel.reflectivity = v.size() == 5 ? v[4] : -1.0;
        } else {
            throw Error(where + ": unknown key");
        }
    }
    for (const char* req : {"dims", "spacing_mm", "retina_top_mm", "layer_mm", "lc_mm",
                            "bmo_radius_mm", "swelling_height_mm", "reflectivity",
                            "attenuation_mm1", "speckle_sigma"})
        if (!seen.count(req))
            throw Error(ctx + ": missing key '" + std::string(req) + "'");
    validate(s);
    return s;
}

void write_analytic_sidecar(const AnalyticVolumes& av, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string() + " for writing");
    f << "drusen_mm3=" << format_double(av.drusen_mm3) << "\n"
      << "swelling_mm3=" << format_double(av.swelling_mm3) << "\n";
    if (!f.flush())
        throw Error("write failed: " + path.string());
}

} // namespace onh
