#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "onh/metrics.hpp"
#include "onh/phantom.hpp"
#include "onh/rng.hpp"

using namespace onh;

namespace {

// Spec with valid bookkeeping but no tissue anywhere; callers add geometry.
PhantomSpec empty_spec(Dims dims = {8, 16, 64}) {
  PhantomSpec s;
  s.dims = dims;
  s.spacing = {0.03, 0.012, 0.0039};
  s.optics.reflectivity = {0.02, 0.55, 0.35, 0.45, 0.90, 0.40, 0.70, 0.60, 0.15};
  s.optics.attenuation_mm1 = {0.01, 1.0, 1.5, 1.2, 4.0, 2.5, 1.5, 1.2, 0.5};
  return s;
}

double rel_err(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

TEST_CASE("spherical cap volume agrees with the sphere-radius form and its limits") {
  // Same cap through V = pi h^2 (3 Rs - h) / 3 with Rs = (rho^2 + h^2) / (2h).
  for (double rho : {0.3, 0.75, 0.8078}) {
    for (double h : {0.05, 0.4025, 1.2197}) {
      double rs = (rho * rho + h * h) / (2.0 * h);
      double alt = std::numbers::pi * h * h * (3.0 * rs - h) / 3.0;
      CHECK(spherical_cap_volume(rho, h) == doctest::Approx(alt).epsilon(1e-12));
    }
  }
  CHECK(spherical_cap_volume(0.5, 0.0) == 0.0);
  CHECK(spherical_cap_volume(0.5, -1.0) == 0.0);
  // Hemisphere: h == rho gives (2/3) pi rho^3.
  CHECK(spherical_cap_volume(0.4, 0.4) ==
        doctest::Approx(2.0 / 3.0 * std::numbers::pi * 0.064).epsilon(1e-12));
}

TEST_CASE("ellipsoid volume is (4/3) pi a b c") {
  Ellipsoid e;
  e.az_mm = 0.62;
  e.ax_mm = 0.62;
  e.ay_mm = 0.41;
  CHECK(e.volume_mm3() ==
        doctest::Approx(4.0 / 3.0 * std::numbers::pi * 0.62 * 0.62 * 0.41).epsilon(1e-12));
}

TEST_CASE("an all-zero-geometry spec rasterizes to pure background") {
  auto labels = gen_labels(empty_spec(), 0);
  for (auto c : labels.data) CHECK(c == 0);
  auto av = analytic_volumes(empty_spec());
  CHECK(av.drusen_mm3 == 0.0);
  CHECK(av.swelling_mm3 == 0.0);
}

TEST_CASE("healthy preset: corner column reproduces the hand-derived slab sequence") {
  auto s = phantom_preset("healthy");
  auto labels = gen_labels(s, 0, 4);
  // Slab boundaries at 1.3/1.4/1.5/1.65/1.7/1.9/2.15 mm with dy = 0.0039 and
  // voxel centers (d + 0.5) dy give these index ranges (derived by hand):
  auto expected_corner = [](int d) -> int {
    if (d < 333) return 0;
    if (d < 359) return 1;
    if (d < 385) return 2;
    if (d < 423) return 3;
    if (d < 436) return 4;
    if (d < 487) return 5;
    if (d < 551) return 6;
    return 0;
  };
  for (int d = 0; d < s.dims.nd; ++d) {
    CAPTURE(d);
    CHECK(labels.at(0, 0, d) == expected_corner(d));
  }
}

TEST_CASE("healthy preset: central column is prelamina then lamina then background") {
  auto s = phantom_preset("healthy");
  auto labels = gen_labels(s, 0, 4);
  // Inside the BMO: class 1 on [1.3, 1.9), class 7 on [1.9, 2.15).
  auto expected_center = [](int d) -> int {
    if (d < 333) return 0;
    if (d < 487) return 1;
    if (d < 551) return 7;
    return 0;
  };
  const int b = s.dims.nb / 2, a = s.dims.na / 2;
  for (int d = 0; d < s.dims.nd; ++d) {
    CAPTURE(d);
    CHECK(labels.at(b, a, d) == expected_center(d));
  }
}

TEST_CASE("papilledema preset: the dome lifts the central prelamina to the apex") {
  auto s = phantom_preset("papilledema");
  auto labels = gen_labels(s, 0, 4);
  const int b = s.dims.nb / 2, a = s.dims.na / 2;
  // Apex depth = retina_top - h = 0.374 mm: tissue starts near d = 96.
  int first_tissue = -1;
  for (int d = 0; d < s.dims.nd; ++d) {
    if (labels.at(b, a, d) != 0) {
      first_tissue = d;
      break;
    }
  }
  REQUIRE(first_tissue >= 0);
  double first_y = (first_tissue + 0.5) * s.spacing.dy_mm;
  CHECK(first_y == doctest::Approx(s.retina_top_mm - s.swelling_height_mm).epsilon(0.05));
  // Continuous class-1 run from the apex to the lamina top at 1.9 mm.
  for (int d = first_tissue; d < 487; ++d) CHECK(labels.at(b, a, d) == 1);
  // Far from the center the dome is absent: same corner profile as healthy.
  CHECK(labels.at(0, 0, 100) == 0);
  CHECK(labels.at(0, 0, 400) == 3);
}

TEST_CASE("odd preset: central column runs 0,1,8,1,7,0 in that order") {
  auto s = phantom_preset("odd");
  auto labels = gen_labels(s, 0, 4);
  const int b = s.dims.nb / 2, a = s.dims.na / 2;
  std::vector<int> runs;
  int prev = -1;
  for (int d = 0; d < s.dims.nd; ++d) {
    int c = labels.at(b, a, d);
    if (c != prev) {
      runs.push_back(c);
      prev = c;
    }
  }
  CHECK(runs == std::vector<int>{0, 1, 8, 1, 7, 0});
}

TEST_CASE("presets land on their target score pairs after rasterization") {
  struct Want {
    const char* name;
    double drusen, swelling;
  };
  // Cluster means the presets are calibrated to; rasterization must stay
  // within half a percent of the closed forms.
  const Want wants[] = {
      {"healthy", 0.0, 1.23},
      {"papilledema", 0.0, 3.43},
      {"odd", 0.66, 1.98},
  };
  for (const auto& w : wants) {
    CAPTURE(w.name);
    auto s = phantom_preset(w.name);
    auto av = analytic_volumes(s);
    CHECK(std::abs(av.drusen_mm3 - w.drusen) < 0.005);
    CHECK(std::abs(av.swelling_mm3 - w.swelling) < 0.005);
    auto labels = gen_labels(s, 0, 4);
    double dr = drusen_score_mm3(labels);
    double sw = swelling_score_mm3(labels);
    if (w.drusen > 0.0) CHECK(rel_err(dr, av.drusen_mm3) < 0.005);
    else CHECK(dr == 0.0);
    CHECK(rel_err(sw, av.swelling_mm3) < 0.005);
  }
  CHECK_THROWS_WITH_AS(phantom_preset("glaucoma"), doctest::Contains("unknown phantom preset"),
                       Error);
}

TEST_CASE("voxelized dome volume matches the cap closed form") {
  // Same spec with and without the dome: every non-dome voxel is identical,
  // so the swelling difference counts exactly the rasterized cap.
  auto s = empty_spec({40, 100, 300});
  s.retina_top_mm = 0.3;
  s.layer_thickness_mm = {0.05, 0.04, 0.03, 0.02, 0.06, 0.05};
  s.lc_thickness_mm = 0.1;
  s.bmo_radius_mm = 0.3;
  auto flat = s;
  s.swelling_height_mm = 0.25;
  double sw_dome = swelling_score_mm3(gen_labels(s, 0, 4));
  double sw_flat = swelling_score_mm3(gen_labels(flat, 0, 4));
  double cap = spherical_cap_volume(s.bmo_radius_mm, s.swelling_height_mm);
  CHECK(rel_err(sw_dome - sw_flat, cap) < 0.01);
}

TEST_CASE("enface RPE hole area matches the BMO disc") {
  auto s = phantom_preset("healthy");
  auto labels = gen_labels(s, 0, 4);
  auto mask = enface_rpe_mask(labels);
  double hole_mm2 = static_cast<double>(mask.true_count()) * s.spacing.dz_mm * s.spacing.dx_mm;
  double disc_mm2 = std::numbers::pi * s.bmo_radius_mm * s.bmo_radius_mm;
  CHECK(rel_err(hole_mm2, disc_mm2) < 0.05);
}

TEST_CASE("a zero RPE thickness adds the outer class-1 ring to the swelling score") {
  auto s = empty_spec({40, 100, 300});
  s.retina_top_mm = 0.3;
  s.layer_thickness_mm = {0.05, 0.04, 0.03, 0.0, 0.06, 0.05};
  s.lc_thickness_mm = 0.1;
  s.bmo_radius_mm = 0.3;
  s.swelling_height_mm = 0.15;
  auto av = analytic_volumes(s);
  double sw = swelling_score_mm3(gen_labels(s, 0, 4));
  CHECK(rel_err(sw, av.swelling_mm3) < 0.03);

  // Restoring a thin RPE slab removes the ring term.
  auto s2 = s;
  s2.layer_thickness_mm[3] = 0.01;
  auto av2 = analytic_volumes(s2);
  CHECK(av2.swelling_mm3 < av.swelling_mm3);
  double sw2 = swelling_score_mm3(gen_labels(s2, 0, 4));
  CHECK(rel_err(sw2, av2.swelling_mm3) < 0.03);
}

TEST_CASE("multiple drusen sum their ellipsoid volumes") {
  auto s = empty_spec({40, 100, 300});
  s.retina_top_mm = 0.3;
  s.layer_thickness_mm = {0.1, 0.1, 0.1, 0.05, 0.25, 0.05};
  s.lc_thickness_mm = 0.1;
  s.bmo_radius_mm = 0.55;
  // Two disjoint drusen inside the cylinder and the [0.3, 0.9] depth band.
  Ellipsoid a;
  a.cz_mm = s.lateral_center_z_mm() - 0.2;
  a.cx_mm = s.lateral_center_x_mm();
  a.cy_mm = 0.5;
  a.az_mm = a.ax_mm = a.ay_mm = 0.12;
  Ellipsoid b;
  b.cz_mm = s.lateral_center_z_mm() + 0.25;
  b.cx_mm = s.lateral_center_x_mm() + 0.1;
  b.cy_mm = 0.65;
  b.az_mm = 0.15;
  b.ax_mm = 0.1;
  b.ay_mm = 0.2;
  s.drusen = {a, b};
  auto av = analytic_volumes(s);
  CHECK(av.drusen_mm3 == doctest::Approx(a.volume_mm3() + b.volume_mm3()).epsilon(1e-12));
  double dr = drusen_score_mm3(gen_labels(s, 0, 4));
  CHECK(rel_err(dr, av.drusen_mm3) < 0.03);
}

TEST_CASE("gen_labels is deterministic and thread-count independent") {
  auto s = phantom_preset("odd");
  auto a = gen_labels(s, 0, 1);
  auto b = gen_labels(s, 7, 1); // seed is part of the interface, not the geometry
  auto c = gen_labels(s, 0, 8);
  CHECK(a.data == b.data);
  CHECK(a.data == c.data);
}

TEST_CASE("spec validation rejects inconsistent geometry with clear messages") {
  auto expect_fail = [](PhantomSpec s, const char* needle) {
    CHECK_THROWS_WITH_AS(validate(s), doctest::Contains(needle), Error);
  };

  auto s = empty_spec({8, 16, 128});
  s.retina_top_mm = 0.2;
  s.layer_thickness_mm = {0.05, 0.0, 0.0, 0.0, 0.05, 0.0};

  {
    auto bad = s;
    bad.layer_thickness_mm[2] = 100.0;
    expect_fail(bad, "layer stack extends below the volume");
  }
  {
    auto bad = s;
    bad.lc_thickness_mm = 100.0;
    expect_fail(bad, "lamina cribrosa extends below the volume");
  }
  {
    auto bad = s;
    bad.swelling_height_mm = 0.1;
    expect_fail(bad, "needs bmo_radius_mm > 0");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 0.05;
    bad.swelling_height_mm = 0.5; // deeper than retina_top
    expect_fail(bad, "extends above the volume");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 0.05;
    bad.swelling_height_mm = 0.08; // taller than a hemisphere on its base
    expect_fail(bad, "must not exceed the BMO radius");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 10.0;
    expect_fail(bad, "beyond the lateral bounds");
  }
  {
    auto bad = s;
    bad.layer_thickness_mm[0] = -0.1;
    expect_fail(bad, "finite and >= 0");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 0.09;
    Ellipsoid e;
    e.cz_mm = bad.lateral_center_z_mm();
    e.cx_mm = bad.lateral_center_x_mm();
    e.cy_mm = 0.225;
    e.az_mm = e.ax_mm = 0.2; // wider than the cylinder
    e.ay_mm = 0.02;
    bad.drusen = {e};
    expect_fail(bad, "inside the BMO cylinder");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 0.09;
    Ellipsoid e;
    e.cz_mm = bad.lateral_center_z_mm();
    e.cx_mm = bad.lateral_center_x_mm();
    e.cy_mm = 0.21; // band is [0.2, 0.3]; ay 0.05 pokes above
    e.az_mm = e.ax_mm = 0.02;
    e.ay_mm = 0.05;
    bad.drusen = {e};
    expect_fail(bad, "inside the prelaminar depth band");
  }
  {
    auto bad = s;
    bad.bmo_radius_mm = 0.09;
    Ellipsoid e;
    e.cz_mm = bad.lateral_center_z_mm();
    e.cx_mm = bad.lateral_center_x_mm();
    e.cy_mm = 0.25;
    e.az_mm = e.ax_mm = e.ay_mm = 0.03;
    bad.drusen = {e, e}; // identical spheres collide
    expect_fail(bad, "bounding spheres");
  }
  {
    auto bad = s;
    bad.vessel.radius_mm = 5.0;
    bad.vessel.x_mm = 0.1;
    bad.vessel.y_mm = 0.1;
    expect_fail(bad, "vessel extends beyond");
  }
  CHECK_NOTHROW(validate(s));
}

TEST_CASE("render with zero attenuation and zero speckle returns the reflectivity map") {
  auto s = empty_spec({4, 8, 32});
  s.optics.attenuation_mm1 = {};
  auto labels = gen_labels(s, 0);
  // Paint a few classes by hand; geometry-empty spec leaves all background.
  labels.data[labels.index(0, 0, 0)] = 1;
  labels.data[labels.index(1, 2, 3)] = 4;
  labels.data[labels.index(3, 7, 31)] = 8;
  auto img = render_intensity(labels, s, 0);
  CHECK(img.at(0, 0, 0) == doctest::Approx(0.55f));
  CHECK(img.at(1, 2, 3) == doctest::Approx(0.90f));
  CHECK(img.at(3, 7, 31) == doctest::Approx(0.15f));
  CHECK(img.at(2, 4, 10) == doctest::Approx(0.02f));
}

TEST_CASE("render attenuates a uniform slab as exp(-2 mu y)") {
  Dims dims{2, 4, 128};
  VoxelSpacing sp{0.03, 0.012, 0.0039};
  auto labels = make_label_volume(dims, sp, std::vector<std::uint8_t>(dims.voxels(), 6));
  auto s = empty_spec(dims);
  const double mu = s.optics.attenuation_mm1[6]; // 1.5 per mm
  const double r = s.optics.reflectivity[6];     // 0.7
  auto img = render_intensity(labels, s, 0);
  for (int d = 0; d < dims.nd; ++d) {
    // Attenuation above sample d covers d full voxels.
    double expected = r * std::exp(-2.0 * mu * sp.dy_mm * d);
    CHECK(img.at(1, 2, d) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("a vessel shadows everything beneath it and nothing above it") {
  Dims dims{4, 64, 256};
  VoxelSpacing sp{0.03, 0.012, 0.0039};
  auto labels = make_label_volume(dims, sp, std::vector<std::uint8_t>(dims.voxels(), 1));
  auto s = empty_spec(dims);
  s.optics.attenuation_mm1[1] = 0.1;
  s.vessel.x_mm = 0.384;
  s.vessel.y_mm = 0.3;
  s.vessel.radius_mm = 0.15;
  s.vessel.mu_mm1 = 30.0;

  auto img = render_intensity(labels, s, 0);
  const int a_under = 31; // column center x = 0.378, inside the vessel
  const int a_away = 5;
  // Above the vessel the columns are identical.
  for (int d = 0; d < 25; ++d) CHECK(img.at(0, a_under, d) == img.at(0, a_away, d));
  // Below it the shadow dominates.
  const int d_deep = 230; // y = 0.899
  CHECK(img.at(0, a_under, d_deep) < 0.01 * img.at(0, a_away, d_deep));

  // Reflectivity override changes voxels inside the vessel by exactly the
  // reflectivity ratio and leaves other columns untouched.
  auto s2 = s;
  s2.vessel.reflectivity = 0.9;
  auto img2 = render_intensity(labels, s2, 0);
  const int d_in = 76; // y = 0.298, inside the vessel disc
  CHECK(img2.at(0, a_under, d_in) / img.at(0, a_under, d_in) ==
        doctest::Approx(0.9 / 0.55).epsilon(1e-5));
  for (int d = 0; d < dims.nd; ++d) CHECK(img2.at(0, a_away, d) == img.at(0, a_away, d));
}

TEST_CASE("speckle is multiplicative log-normal and reproducible") {
  Dims dims{4, 16, 64};
  VoxelSpacing sp{0.03, 0.012, 0.0039};
  auto labels = make_label_volume(dims, sp, std::vector<std::uint8_t>(dims.voxels(), 1));
  auto s = empty_spec(dims);
  s.optics.attenuation_mm1 = {};
  s.speckle_sigma = 0.4;

  auto a = render_intensity(labels, s, 42, 1);
  auto b = render_intensity(labels, s, 42, 8);
  CHECK(a.data == b.data);
  auto c = render_intensity(labels, s, 43, 1);
  CHECK(a.data != c.data);

  // With mu = 0 and constant R, log(I) ~ log(R) + sigma * N(0,1).
  double sum = 0.0, sum2 = 0.0;
  for (float v : a.data) {
    CHECK(v > 0.0f);
    double l = std::log(v);
    sum += l;
    sum2 += l * l;
  }
  const double n = static_cast<double>(a.data.size());
  double mean = sum / n;
  double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  CHECK(mean == doctest::Approx(std::log(0.55)).epsilon(0.05));
  CHECK(sd == doctest::Approx(0.4).epsilon(0.08));
}

TEST_CASE("render rejects a label volume that does not match the spec dims") {
  auto s = empty_spec({4, 8, 32});
  auto labels = gen_labels(empty_spec({4, 8, 33}), 0);
  CHECK_THROWS_WITH_AS(render_intensity(labels, s, 0), doctest::Contains("do not match"),
                       Error);
}

TEST_CASE("phantom spec files round-trip byte for byte") {
  testutil::TempDir td;
  auto s = phantom_preset("odd");
  s.vessel.x_mm = 1.2;
  s.vessel.y_mm = 1.0;
  s.vessel.radius_mm = 0.08;
  s.vessel.mu_mm1 = 20.0;
  s.speckle_sigma = 0.35;
  write_phantom_spec(s, td.str("spec.txt"));
  auto r = read_phantom_spec(td.str("spec.txt"));
  CHECK(r.dims == s.dims);
  CHECK(r.bmo_radius_mm == s.bmo_radius_mm);
  CHECK(r.swelling_height_mm == s.swelling_height_mm);
  REQUIRE(r.drusen.size() == 1);
  CHECK(r.drusen[0].ay_mm == s.drusen[0].ay_mm);
  CHECK(r.vessel.radius_mm == s.vessel.radius_mm);
  CHECK(r.vessel.reflectivity == -1.0);
  CHECK(r.speckle_sigma == s.speckle_sigma);
  write_phantom_spec(r, td.str("spec2.txt"));
  CHECK(testutil::read_file(td.str("spec.txt")) == testutil::read_file(td.str("spec2.txt")));
  // Comments and blank lines are accepted.
  testutil::write_file(td.str("spec3.txt"),
                       "# comment\n\n" + testutil::read_file(td.str("spec.txt")));
  CHECK(read_phantom_spec(td.str("spec3.txt")).dims == s.dims);
}

TEST_CASE("phantom spec parser reports the offending line and key") {
  testutil::TempDir td;
  auto s = phantom_preset("healthy");
  write_phantom_spec(s, td.str("good.txt"));
  const std::string good = testutil::read_file(td.str("good.txt"));

  auto expect_fail = [&](const std::string& text, const char* needle) {
    testutil::write_file(td.str("bad.txt"), text);
    CHECK_THROWS_WITH_AS(read_phantom_spec(td.str("bad.txt")), doctest::Contains(needle),
                         Error);
  };

  expect_fail(good + "mystery_key=1\n", "unknown key");
  expect_fail(good + "lc_mm=0.25\n", "duplicate key");
  expect_fail("dims=4,8\n" + good.substr(good.find('\n') + 1), "expected nb,na,nd");
  expect_fail("dims=4.5,8,16\n" + good.substr(good.find('\n') + 1), "positive integers");
  expect_fail("justtext\n" + good, "expected key=value");
  // Missing required key: drop the first line (dims).
  expect_fail(good.substr(good.find('\n') + 1), "missing key 'dims'");
  // The error context names the file, line, and key.
  testutil::write_file(td.str("ctx.txt"), good + "layer_mm=1,2\n");
  try {
    read_phantom_spec(td.str("ctx.txt"));
    FAIL("expected a parse error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("ctx.txt:") != std::string::npos);
    CHECK(msg.find("(layer_mm)") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(read_phantom_spec(td.str("nope.txt")), doctest::Contains("cannot open"),
                       Error);
}

TEST_CASE("analytic sidecar file lists both scores") {
  testutil::TempDir td;
  AnalyticVolumes av{0.5, 1.25};
  write_analytic_sidecar(av, td.str("a.txt"));
  CHECK(testutil::read_file(td.str("a.txt")) == "drusen_mm3=0.5\nswelling_mm3=1.25\n");
}
