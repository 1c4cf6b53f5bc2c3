#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "nvdnp/coil_field.hpp"
#include "nvdnp/errors.hpp"

using namespace nvdnp;
using namespace nvdnp::coil;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMu0 = 4e-7 * kPi;

// Midpoint Biot-Savart integral over a circle, SI units throughout.
Eigen::Vector3d circle_oracle(double radius_mm, const Eigen::Vector3d& p_mm, int elements) {
  const double a = radius_mm * 1e-3;
  const Eigen::Vector3d p = p_mm * 1e-3;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  const double dphi = 2.0 * kPi / elements;
  for (int k = 0; k < elements; ++k) {
    const double phi = (k + 0.5) * dphi;
    const Eigen::Vector3d src(a * std::cos(phi), a * std::sin(phi), 0.0);
    const Eigen::Vector3d dl(-a * std::sin(phi) * dphi, a * std::cos(phi) * dphi, 0.0);
    const Eigen::Vector3d r = p - src;
    b += dl.cross(r) / std::pow(r.norm(), 3);
  }
  return kMu0 / (4.0 * kPi) * b;
}

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

TEST_CASE("loop field on the axis matches the closed form") {
  for (double z = -10.0; z <= 10.0; z += 0.25) {
    const double expect = kMu0 * 1e-6 / (2.0 * std::pow(1e-6 + z * z * 1e-6, 1.5));
    CHECK_THAT(loop_field_on_axis(1.0, z), WithinRel(expect, 1e-12));
    const Eigen::Vector3d b = loop_field(1.0, {0.0, 0.0, z});
    CHECK_THAT(b.z(), WithinRel(expect, 1e-3));
    CHECK(std::hypot(b.x(), b.y()) < 1e-9 * expect);
    // Just off the axis the elliptic form joins the series smoothly.
    CHECK_THAT(loop_field(1.0, {2e-4, 0.0, z}).z(), WithinRel(expect, 1e-3));
  }
}

TEST_CASE("loop field matches a fine segment integral off the axis") {
  const Eigen::Vector3d points[] = {{0.3, 0.0, 0.5}, {0.9, 0.4, 0.2}, {2.5, -1.0, 1.0}, {0.7, 0.7, -0.3}};
  for (const auto& p : points) {
    const Eigen::Vector3d ref = circle_oracle(1.0, p, 10000);
    CHECK((loop_field(1.0, p) - ref).norm() < 1e-4 * ref.norm());
  }
}

TEST_CASE("concentric coil agrees with its segmented evaluation") {
  const CoilGeometry g;
  const Eigen::Vector3d centre(0.0, 0.0, 1.16);
  const Eigen::Vector3d exact = b1_field(g, centre);
  const Eigen::Vector3d segmented = b1_field_segmented(g, centre, 10000);
  CHECK((exact - segmented).norm() < 1e-4 * exact.norm());
  double sum = 0.0;
  for (int i = 0; i < g.turns; ++i) sum += loop_field_on_axis(g.turn_radius(i), 1.16);
  CHECK_THAT(exact.z(), WithinRel(sum, 1e-9));
  CHECK_THAT(g.turn_radius(0), WithinRel(1.0, 1e-15));
  CHECK_THAT(g.turn_radius(g.turns - 1), WithinRel(6.0, 1e-15));
}

TEST_CASE("field obeys the mirror symmetries of a planar coil") {
  const CoilGeometry g;
  const Eigen::Vector3d p(0.8, -0.3, 0.7);
  const Eigen::Vector3d b = b1_field(g, p);
  const Eigen::Vector3d below = b1_field(g, {p.x(), p.y(), -p.z()});
  CHECK_THAT(below.z(), WithinRel(b.z(), 1e-12));
  CHECK_THAT(below.x(), WithinRel(-b.x(), 1e-12));
  const Eigen::Vector3d flipped = b1_field(g, {-p.x(), p.y(), p.z()});
  CHECK_THAT(flipped.x(), WithinRel(-b.x(), 1e-12));
  CHECK_THAT(flipped.z(), WithinRel(b.z(), 1e-12));
}

TEST_CASE("transverse field is rotation invariant for an axial static field") {
  const CoilGeometry g;
  const Eigen::Vector3d axis(0.0, 0.0, 1.0);
  const Eigen::Vector3d p(1.3, 0.0, 0.9);
  const double ref = effective_b1_perp(g, p, axis);
  for (double deg = 10.0; deg < 360.0; deg += 37.0) {
    const Eigen::Vector3d q = Eigen::AngleAxisd(deg * kPi / 180.0, axis) * p;
    CHECK_THAT(effective_b1_perp(g, q, axis), WithinRel(ref, 1e-10));
  }
  CHECK_THROWS_AS(effective_b1_perp(g, p, Eigen::Vector3d(0.0, 0.0, 2.0)), InvalidArgument);
}

TEST_CASE("far from the coil the field is a dipole") {
  CoilGeometry g;
  g.turns = 1;
  g.inner_radius_mm = g.outer_radius_mm = 2.0;
  const Eigen::Vector3d m(0.0, 0.0, 1.0);
  for (const Eigen::Vector3d& p : {Eigen::Vector3d(150.0, 0.0, 100.0), Eigen::Vector3d(0.0, 80.0, -60.0)}) {
    const Eigen::Vector3d r = p.normalized();
    const Eigen::Vector3d dipole = 3.0 * r * r.dot(m) - m;
    CHECK(angle_between(b1_field(g, p), dipole) < 0.05);
  }
}

TEST_CASE("archimedean spiral stays close to the concentric layout") {
  CoilGeometry concentric;
  CoilGeometry spiral = concentric;
  spiral.layout = TurnLayout::Archimedean;
  const Eigen::Vector3d p(0.0, 0.0, 1.16);
  CHECK_THAT(b1_field(spiral, p).z(), WithinRel(b1_field(concentric, p).z(), 0.05));
}

TEST_CASE("fields are rejected on a filament") {
  const CoilGeometry g;
  CHECK_THROWS_AS(b1_field(g, {g.turn_radius(3), 0.0, 0.0}), InvalidArgument);
  CoilGeometry spiral = g;
  spiral.layout = TurnLayout::Archimedean;
  CHECK_THROWS_AS(b1_field(spiral, {g.inner_radius_mm, 0.0, 0.0}), InvalidArgument);
  CHECK_NOTHROW(b1_field(g, {g.turn_radius(3), 0.0, 0.01}));
}

TEST_CASE("pulse calibration is nominal at the calibration point") {
  PulseCalibration cal;
  cal.calibration_point_mm = {0.2, 0.1, 1.16};
  CHECK_THAT(cal.flip_angle(cal.calibration_point_mm), WithinRel(kPi / 2.0, 1e-14));
  CHECK_THAT(cal.sensitivity(cal.calibration_point_mm), WithinRel(1.0, 1e-14));
  const Eigen::Vector3d far(0.0, 0.0, 2.4);
  const double rel = cal.flip_angle(far) / (kPi / 2.0);
  CHECK(rel < 1.0);
  CHECK_THAT(cal.sensitivity(far), WithinRel(rel * std::sin(kPi / 2.0 * rel), 1e-12));

  cal.uniform_field = true;
  for (const Eigen::Vector3d& p : {far, Eigen::Vector3d(2.0, -2.0, 0.1)}) {
    CHECK(cal.sensitivity(p) == 1.0);
    CHECK(cal.flip_angle(p) == kPi / 2.0);
  }
}

TEST_CASE("grid evaluation is deterministic and interpolates linear data exactly") {
  GridSpec grid;
  grid.x = {-1.0, 1.0, 9};
  grid.y = {-1.0, 1.0, 7};
  grid.z = {0.0, 2.0, 11};
  auto linear = [](const Eigen::Vector3d& p) { return 1.0 + 2.0 * p.x() - p.y() + 0.5 * p.z(); };
  const GridMap map = evaluate_on_grid(grid, linear);
  REQUIRE(map.values.size() == 9u * 7u * 11u);
  for (std::size_t iz = 0; iz < 11; ++iz) {
    for (std::size_t iy = 0; iy < 7; ++iy) {
      for (std::size_t ix = 0; ix < 9; ++ix) {
        const Eigen::Vector3d p(grid.x.at(ix), grid.y.at(iy), grid.z.at(iz));
        CHECK(map.at(ix, iy, iz) == linear(p));
        CHECK(map.values[ix + 9 * (iy + 7 * iz)] == linear(p));
      }
    }
  }
  const Eigen::Vector3d inside(0.13, -0.77, 1.41);
  CHECK_THAT(map.interpolate(inside), WithinRel(linear(inside), 1e-12));
  CHECK(map.contains({1.0, 1.0, 2.0}));
  CHECK_FALSE(map.contains({1.01, 0.0, 1.0}));
  CHECK_THROWS_AS(map.interpolate({0.0, 0.0, 2.5}), InvalidArgument);
}

TEST_CASE("shape averages integrate simple functions") {
  const Slab slab{{0.0, 0.0, 1.16}, {2.0, 2.0, 0.32}};
  const Cylinder cyl{{0.0, 0.0, 1.16}, 3.7, 2.0};
  auto one = [](const Eigen::Vector3d&) { return 1.0; };
  auto z = [](const Eigen::Vector3d& p) { return p.z(); };
  auto r2 = [](const Eigen::Vector3d& p) { return p.x() * p.x() + p.y() * p.y(); };
  CHECK_THAT(shape_average(one, slab), WithinRel(1.0, 1e-12));
  CHECK_THAT(shape_average(one, cyl), WithinRel(1.0, 1e-12));
  CHECK_THAT(shape_average(z, slab), WithinRel(1.16, 1e-12));
  CHECK_THAT(shape_average(z, cyl), WithinRel(1.16, 1e-12));
  // <r^2> over a disc is R^2 / 2.
  CHECK_THAT(shape_average(r2, cyl), WithinRel(std::pow(1.85, 2) / 2.0, 1e-3));
  // <x^2> over the slab is (2^2) / 12.
  CHECK_THAT(shape_average([](const Eigen::Vector3d& p) { return p.x() * p.x(); }, slab),
             WithinRel(4.0 / 12.0, 1e-3));
}

TEST_CASE("sample averages converge and stay on the grid") {
  const CoilGeometry g;
  PulseCalibration cal;
  cal.geometry = g;
  const Eigen::Vector3d centre = default_sample_center(g);
  CHECK_THAT(centre.z(), WithinRel(1.16, 1e-12));
  cal.calibration_point_mm = centre;
  GridSpec grid;
  grid.x = {-2.5, 2.5, 26};
  grid.y = {-2.5, 2.5, 26};
  grid.z = {0.1, 2.5, 25};
  const SensitivityMap map = sensitivity_map(cal, grid);
  const Slab slab{centre, {2.0, 2.0, 0.32}};
  const Cylinder cyl{centre, 3.7, 2.0};
  for (const SampleShape& s : {SampleShape(slab), SampleShape(cyl)}) {
    const double coarse = sample_average(map, s, 100000);
    const double fine = sample_average(map, s, 1000000);
    CHECK(std::abs(coarse - fine) < 0.002 * std::abs(fine));
    CHECK(fine > 0.0);
    CHECK(fine <= 1.0);
  }
  const Cylinder off{{0.0, 0.0, 2.2}, 3.7, 2.0};
  CHECK_THROWS_AS(sample_average(map, off), InvalidArgument);
}

TEST_CASE("transverse projection of the coil field") {
  const Eigen::Vector3d b(0.0, 0.0, 2.0);
  CHECK_THAT(effective_b1_perp(b, Eigen::Vector3d(0.0, 0.0, 1.0)), WithinAbs(0.0, 1e-15));
  CHECK_THAT(effective_b1_perp(b, Eigen::Vector3d(1.0, 0.0, 0.0)), WithinRel(2.0, 1e-15));
  // On the axis the field is axial, so a 45 degree static field sees 1/sqrt(2) of it.
  const CoilGeometry g;
  const Eigen::Vector3d p(0.0, 0.0, 1.16);
  CHECK_THAT(effective_b1_perp(g, p, static_field_direction(45.0)),
             WithinRel(b1_field(g, p).norm() / std::sqrt(2.0), 1e-12));
}

TEST_CASE("field is linear in current and additive over turns") {
  CoilGeometry g;
  g.turns = 3;
  g.inner_radius_mm = 1.0;
  g.outer_radius_mm = 2.0;
  const Eigen::Vector3d p(0.4, 0.9, 0.6);
  const Eigen::Vector3d sum = loop_field(1.0, p) + loop_field(1.5, p) + loop_field(2.0, p);
  CHECK((b1_field(g, p) - sum).norm() < 1e-14 * sum.norm());
}

TEST_CASE("flip angle is proportional to the transverse field and decays far away") {
  PulseCalibration cal;
  cal.calibration_point_mm = {0.0, 0.0, 1.16};
  const Eigen::Vector3d q(1.5, 0.5, 2.0);
  const double ratio = effective_b1_perp(cal.geometry, q, cal.b0_dir) /
                       effective_b1_perp(cal.geometry, cal.calibration_point_mm, cal.b0_dir);
  CHECK_THAT(cal.flip_angle(q), WithinRel(kPi / 2.0 * ratio, 1e-12));
  CHECK(cal.flip_angle({0.0, 0.0, 60.0}) < 0.05);
  CHECK(cal.flip_angle({60.0, 0.0, 10.0}) < 0.05);
}

TEST_CASE("sensitivity map is non-negative, centre-peaked and rotation invariant") {
  PulseCalibration cal;
  cal.calibration_point_mm = {0.0, 0.0, 1.16};
  GridSpec grid;
  grid.x = {-10.0, 10.0, 41};
  grid.y = {-10.0, 10.0, 41};
  grid.z = {1.16, 1.16 + 1e-9, 2};
  const auto map = sensitivity_map(cal, grid);
  // Close to the windings the field can exceed its central value; beyond them it cannot.
  double mean = 0.0;
  for (std::size_t i = 0; i < 41; ++i) {
    for (std::size_t j = 0; j < 41; ++j) {
      const double v = map.at(i, j, 0);
      CHECK(v >= 0.0);
      mean += v / (41.0 * 41.0);
      if (std::hypot(-10.0 + 0.5 * i, -10.0 + 0.5 * j) > 6.5) CHECK(v < map.at(20, 20, 0));
    }
  }
  CHECK(mean < map.at(20, 20, 0));

  cal.b0_dir = Eigen::Vector3d(0.0, 0.0, 1.0);
  cal.calibration_point_mm = {0.5, 0.0, 1.16};
  const Eigen::Vector3d p(1.1, 0.0, 0.8);
  for (double deg : {30.0, 145.0, 260.0}) {
    const Eigen::Vector3d q = Eigen::AngleAxisd(deg * kPi / 180.0, Eigen::Vector3d::UnitZ()) * p;
    CHECK_THAT(cal.sensitivity(q), WithinRel(cal.sensitivity(p), 1e-10));
  }
}

TEST_CASE("shrinking a sample toward the peak raises its average") {
  PulseCalibration cal;
  cal.calibration_point_mm = {0.0, 0.0, 1.16};
  GridSpec grid;
  grid.x = {-2.5, 2.5, 26};
  grid.y = {-2.5, 2.5, 26};
  grid.z = {0.1, 2.5, 25};
  const auto map = sensitivity_map(cal, grid);
  double prev = 0.0;
  for (double size : {4.0, 3.0, 2.0, 1.0, 0.5}) {
    const double v = sample_average(map, Slab{{0.0, 0.0, 1.16}, {size, size, 0.32}}, 20000);
    CHECK(v > prev);
    prev = v;
  }

  cal.uniform_field = true;
  const auto flat = sensitivity_map(cal, grid);
  CHECK_THAT(sample_average(flat, Cylinder{{0.0, 0.0, 1.16}, 3.7, 2.0}), WithinRel(1.0, 1e-12));
  CHECK_THAT(sample_average(flat, Slab{{0.3, 0.0, 1.0}, {1.0, 2.0, 0.5}}), WithinRel(1.0, 1e-12));
}
