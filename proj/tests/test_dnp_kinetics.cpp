#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "nvdnp/dnp_kinetics.hpp"
#include "nvdnp/errors.hpp"
#include "nvdnp/optical_pump.hpp"

using namespace nvdnp;
using namespace nvdnp::dnp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPnv = 0.3;

// Forward Euler on the two-compartment rate equations.
double euler_bulk(const DnpParams& p, double pnv, double eff, double t_end, double dt) {
  const double w = p.drive_rate();
  const double k = p.diffusion_nm2_per_s / std::pow(0.5 * p.nv_spacing_nm, 2);
  const double f = p.proximal_fraction;
  const double r1 = std::isinf(p.nuclear_t1_s) ? 0.0 : 1.0 / p.nuclear_t1_s;
  double x = 0.0, y = 0.0;
  const auto steps = static_cast<long>(std::llround(t_end / dt));
  for (long s = 0; s < steps; ++s) {
    const double dx = w * (eff * pnv - x) - k / f * (x - y) - r1 * x;
    const double dy = k / (1.0 - f) * (x - y) - r1 * y;
    x += dt * dx;
    y += dt * dy;
  }
  return y;
}

// Independent finite-volume radial solver with classical RK4 time steps.
std::vector<double> rk4_radial(const DnpParams& p, const RadialGeometry& g, double pnv, double eff,
                               const std::vector<double>& times, double dt) {
  const std::size_t n = g.cells;
  const double dr = g.outer_radius_nm / n;
  const double w = p.drive_rate();
  const double r1 = std::isinf(p.nuclear_t1_s) ? 0.0 : 1.0 / p.nuclear_t1_s;
  std::vector<double> vol(n), wd(n), cond(n + 1, 0.0);
  const double rd3 = std::pow(g.drive_radius_nm, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::pow(dr * i, 3), b = std::pow(dr * (i + 1), 3);
    vol[i] = (b - a) / 3.0;
    wd[i] = w * (std::min(std::max(rd3, a), b) - a) / (b - a);
  }
  for (std::size_t i = 1; i < n; ++i) cond[i] = p.diffusion_nm2_per_s * std::pow(dr * i, 2) / dr;

  auto rhs = [&](const std::vector<double>& u) {
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      double flux = 0.0;
      if (i > 0) flux += cond[i] * (u[i - 1] - u[i]);
      if (i + 1 < n) flux += cond[i + 1] * (u[i + 1] - u[i]);
      d[i] = flux / vol[i] + wd[i] * (eff * pnv - u[i]) - r1 * u[i];
    }
    return d;
  };
  auto mean = [&](const std::vector<double>& u) {
    double s = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += u[i] * vol[i];
      v += vol[i];
    }
    return s / v;
  };

  std::vector<double> u(n, 0.0), out;
  double t = 0.0;
  for (double target : times) {
    while (t < target - 1e-12) {
      const double h = std::min(dt, target - t);
      const auto k1 = rhs(u);
      std::vector<double> tmp(n);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k1[i];
      const auto k2 = rhs(tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * h * k2[i];
      const auto k3 = rhs(tmp);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + h * k3[i];
      const auto k4 = rhs(tmp);
      for (std::size_t i = 0; i < n; ++i) u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      t += h;
    }
    out.push_back(mean(u));
  }
  return out;
}

std::vector<double> grid(double t_max, int points) {
  std::vector<double> t(points);
  for (int i = 0; i < points; ++i) t[i] = t_max * i / (points - 1);
  return t;
}

}  // namespace

TEST_CASE("frequency profile is antisymmetric about the transition") {
  const DnpParams p;
  const double center = 8900.5;
  for (double d = 0.0; d <= 40.0; d += 0.37) {
    const double plus = frequency_profile(p, center + d, center, -1);
    const double minus = frequency_profile(p, center - d, center, -1);
    CHECK(plus == -minus);
  }
  CHECK(frequency_profile(p, center, center, 1) == 0.0);
}

TEST_CASE("branch sign inverts the whole profile") {
  const DnpParams p;
  CHECK(branch_sign(spin::Branch::Upper) == -branch_sign(spin::Branch::Lower));
  for (double d = -30.0; d <= 30.0; d += 0.5) {
    const double lo = frequency_profile(p, 100.0 + d, 100.0, branch_sign(spin::Branch::Lower));
    const double up = frequency_profile(p, 100.0 + d, 100.0, branch_sign(spin::Branch::Upper));
    CHECK(lo == -up);
  }
}

TEST_CASE("profile extrema sit at least the Larmor frequency from the centre") {
  DnpParams p;
  CHECK(profile_extremum_offset(p) >= 4.5);
  const double peak = profile_extremum_offset(p);
  const double value = frequency_profile(p, peak, 0.0, 1);
  CHECK(value > frequency_profile(p, peak - 0.05, 0.0, 1));
  CHECK(value > frequency_profile(p, peak + 0.05, 0.0, 1));
  // Narrow lines resolve the solid-effect condition at +/- wn.
  p.esr_linewidth_mhz = 0.1;
  CHECK_THAT(profile_extremum_offset(p), WithinAbs(p.nuclear_larmor_mhz, 1e-3));
}

TEST_CASE("microwave saturation is monotone and bounded") {
  DnpParams p;
  double prev = -1.0;
  for (double pw = 0.0; pw <= 20.0; pw += 0.25) {
    p.mw_power_w = pw;
    const double s = power_saturation(p);
    CHECK(s > prev);
    CHECK(s < 1.0);
    prev = s;
  }
  p.mw_power_w = 0.0;
  CHECK(steady_state(p, kPnv, 1.0) == 0.0);
}

TEST_CASE("two-compartment solution matches an Euler oracle") {
  const DnpParams p;
  const double eff = GENERATE(1.0, -0.6);
  const std::vector<double> times{1.0, 10.0, 30.0, 100.0, 200.0};
  const auto curve = buildup_two_compartment(p, kPnv, eff, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK_THAT(curve.polarization[i], WithinRel(euler_bulk(p, kPnv, eff, times[i], 1e-4), 1e-4));
  }
}

TEST_CASE("default kinetics reach steady state by 100 s") {
  const DnpParams p;
  const auto t = grid(300.0, 3001);
  const auto curve = buildup_two_compartment(p, kPnv, 1.0, t);
  const double ss = steady_state(p, kPnv, 1.0);
  CHECK(curve.polarization.front() == 0.0);
  for (std::size_t i = 1; i < t.size(); ++i) {
    CHECK(curve.polarization[i] >= curve.polarization[i - 1]);
    CHECK(curve.polarization[i] <= ss);
  }
  CHECK(curve.polarization[1000] >= 0.95 * ss);
}

TEST_CASE("steady state is the fixed point of the rate equations") {
  const DnpParams p;
  const auto m = TwoCompartmentModel::from(p, kPnv, 0.8);
  const auto ss = m.steady();
  const auto d = m.derivative(ss);
  CHECK_THAT(d.proximal, WithinAbs(0.0, 1e-14));
  CHECK_THAT(d.bulk, WithinAbs(0.0, 1e-14));
  CHECK_THAT(m.evolve({}, 1e5).bulk, WithinRel(ss.bulk, 1e-12));
  CHECK(ss.proximal >= ss.bulk);
  CHECK(ss.proximal <= 0.8 * kPnv);
}

TEST_CASE("polarization is linear and odd in the drive") {
  const DnpParams p;
  const std::vector<double> t{5.0, 50.0};
  const auto a = buildup_two_compartment(p, kPnv, 0.5, t);
  const auto b = buildup_two_compartment(p, kPnv, -1.0, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK_THAT(b.polarization[i], WithinRel(-2.0 * a.polarization[i], 1e-12));
  }
}

TEST_CASE("without drive or relaxation the total polarization is conserved") {
  DnpParams p;
  p.mw_power_w = 0.0;
  p.nuclear_t1_s = std::numeric_limits<double>::infinity();
  const auto m = TwoCompartmentModel::from(p, kPnv, 1.0);
  const CompartmentState x0{0.4, 0.0};
  const double f = p.proximal_fraction;
  for (double t : {0.01, 0.1, 1.0, 10.0}) {
    const auto x = m.evolve(x0, t);
    CHECK_THAT(f * x.proximal + (1.0 - f) * x.bulk, WithinRel(f * 0.4, 1e-12));
  }
  const auto late = m.evolve(x0, 100.0);
  CHECK_THAT(late.bulk, WithinRel(f * 0.4, 1e-9));

  const auto g = RadialGeometry::from(p, 48);
  std::vector<double> init(48, 0.0);
  init[3] = 1.0;
  const auto r = buildup_pde_1d(p, g, kPnv, 1.0, std::vector<double>{0.0, 0.1, 10.0}, init);
  CHECK_THAT(r.curve.polarization[1], WithinRel(r.curve.polarization[0], 1e-10));
  CHECK_THAT(r.curve.polarization[2], WithinRel(r.curve.polarization[0], 1e-10));
  // Diffusion flattens the profile.
  CHECK_THAT(r.profiles[2].front(), WithinRel(r.profiles[2].back(), 1e-6));
}

TEST_CASE("saturation recovery samples the buildup") {
  const DnpParams p;
  const std::vector<double> delays{0.0, 2.0, 20.0, 200.0};
  const auto sr = saturation_recovery(p, kPnv, 1.0, delays);
  const auto curve = buildup_two_compartment(p, kPnv, 1.0, delays);
  for (std::size_t i = 0; i < delays.size(); ++i) {
    CHECK(sr[i].first == delays[i]);
    CHECK(sr[i].second == curve.polarization[i]);
  }
  CHECK_THROWS_AS(saturation_recovery(p, kPnv, 1.0, std::vector<double>{-1.0}), InvalidArgument);
}

TEST_CASE("radial model matches an explicit RK4 oracle") {
  const DnpParams p;
  const auto g = RadialGeometry::from(p, 32);
  const std::vector<double> times{0.05, 0.5, 2.0, 5.0};
  const auto exact = buildup_pde_1d(p, g, kPnv, 1.0, times);
  const auto oracle = rk4_radial(p, g, kPnv, 1.0, times, 2e-6);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK_THAT(exact.curve.polarization[i], WithinRel(oracle[i], 1e-8));
  }
}

TEST_CASE("radial model converges under grid refinement") {
  const DnpParams p;
  const std::vector<double> times{5.0, 20.0, 100.0};
  const auto coarse = buildup_pde_1d(p, RadialGeometry::from(p, 32), kPnv, 1.0, times);
  const auto fine = buildup_pde_1d(p, RadialGeometry::from(p, 256), kPnv, 1.0, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK_THAT(coarse.curve.polarization[i], WithinRel(fine.curve.polarization[i], 0.01));
  }
  CHECK_THAT(steady_state_pde(p, RadialGeometry::from(p, 32), kPnv, 1.0),
             WithinRel(steady_state_pde(p, RadialGeometry::from(p, 256), kPnv, 1.0), 0.01));
}

TEST_CASE("radial and two-compartment pictures agree on the steady state") {
  const DnpParams p;
  const double radial = steady_state_pde(p, RadialGeometry::from(p), kPnv, 1.0);
  CHECK_THAT(radial, WithinRel(steady_state(p, kPnv, 1.0), 0.05));
  const auto late = buildup_pde_1d(p, RadialGeometry::from(p), kPnv, 1.0, std::vector<double>{5000.0});
  CHECK_THAT(late.curve.polarization[0], WithinRel(radial, 1e-9));
}

TEST_CASE("without diffusion only the driven shell polarizes") {
  DnpParams p;
  p.diffusion_nm2_per_s = 0.0;
  RadialGeometry g;
  g.cells = 64;
  g.outer_radius_nm = 5.0;
  g.drive_radius_nm = 5.0 * 24.0 / 64.0;  // on a cell face
  const double rate = p.drive_rate() + 1.0 / p.nuclear_t1_s;
  const double shell = std::pow(24.0 / 64.0, 3);
  const std::vector<double> times{0.5, 3.0, 30.0};
  const auto r = buildup_pde_1d(p, g, kPnv, 1.0, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double single = p.drive_rate() * kPnv / rate * -std::expm1(-rate * times[i]);
    CHECK_THAT(r.curve.polarization[i], WithinRel(shell * single, 1e-10));
    CHECK(r.profiles[i][63] == 0.0);
  }
}

TEST_CASE("kinetics reject invalid input") {
  DnpParams p;
  p.proximal_fraction = 1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = {};
  p.nuclear_t1_s = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = {};
  CHECK_THROWS_AS(steady_state(p, 0.9, 2.0), InvalidArgument);
  CHECK_THROWS_AS(buildup_two_compartment(p, kPnv, 1.0, std::vector<double>{2.0, 1.0}),
                  InvalidArgument);
  CHECK_THROWS_AS(buildup_pde_1d(p, RadialGeometry::from(p, 16), kPnv, 1.0, std::vector<double>{1.0}),
                  InvalidArgument);
  p.mw_power_w = 0.0;
  p.nuclear_t1_s = std::numeric_limits<double>::infinity();
  CHECK(steady_state(p, kPnv, 1.0) == 0.0);
}

TEST_CASE("Euler oracle holds across random parameter sets") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    DnpParams p;
    p.transfer_rate_per_s = 0.2 + 3.0 * u(rng);
    p.diffusion_nm2_per_s = 50.0 + 1000.0 * u(rng);
    p.nuclear_t1_s = 20.0 + 500.0 * u(rng);
    p.proximal_fraction = 0.02 + 0.2 * u(rng);
    p.nv_spacing_nm = 6.0 + 10.0 * u(rng);
    p.mw_power_w = 0.1 + 3.0 * u(rng);
    const double eff = -1.0 + 2.0 * u(rng);
    const auto curve = buildup_two_compartment(p, kPnv, eff, std::vector<double>{10.0, 40.0});
    CHECK_THAT(curve.polarization[0], WithinRel(euler_bulk(p, kPnv, eff, 10.0, 1e-4), 1e-4));
    CHECK_THAT(curve.polarization[1], WithinRel(euler_bulk(p, kPnv, eff, 40.0, 1e-4), 1e-4));
  }
}

TEST_CASE("no drive means no polarization") {
  DnpParams p;
  p.mw_power_w = 0.0;
  const auto two = buildup_two_compartment(p, kPnv, 1.0, std::vector<double>{0.0, 10.0, 100.0});
  for (double v : two.polarization) CHECK(v == 0.0);
  const auto pde = buildup_pde_1d(p, RadialGeometry::from(p, 32), kPnv, 1.0, std::vector<double>{1.0, 50.0});
  for (double v : pde.curve.polarization) CHECK(v == 0.0);
  CHECK(steady_state_pde(p, RadialGeometry::from(p, 32), kPnv, 1.0) == 0.0);
}

TEST_CASE("lossless fast exchange carries the full drive to the bulk") {
  DnpParams p;
  p.nuclear_t1_s = std::numeric_limits<double>::infinity();
  p.diffusion_nm2_per_s = 1e5;
  const auto m = TwoCompartmentModel::from(p, kPnv, 0.7);
  CHECK_THAT(m.evolve({}, 1e4).bulk, WithinRel(0.7 * kPnv, 1e-9));
  CHECK_THAT(steady_state(p, kPnv, 0.7), WithinRel(0.7 * kPnv, 1e-9));
}

TEST_CASE("long-horizon buildup reaches the closed-form steady state") {
  const DnpParams p;
  const double horizon = 20.0 * std::max(p.nuclear_t1_s, 1.0 / p.drive_rate());
  const auto curve = buildup_two_compartment(p, kPnv, 0.6, std::vector<double>{horizon});
  CHECK_THAT(curve.polarization[0], WithinRel(steady_state(p, kPnv, 0.6), 1e-6));
  const auto sr = saturation_recovery(p, kPnv, 0.6, std::vector<double>{horizon});
  CHECK_THAT(sr[0].second, WithinRel(steady_state(p, kPnv, 0.6), 1e-6));
}

TEST_CASE("bulk polarization never exceeds the drive") {
  const DnpParams p;
  for (double eff : {1.0, -0.4}) {
    const auto curve = buildup_two_compartment(p, kPnv, eff, grid(500.0, 501));
    for (double v : curve.polarization) CHECK(std::abs(v) <= std::abs(eff * kPnv));
  }
}

TEST_CASE("steady state grows with microwave power and laser intensity") {
  DnpParams p;
  optical::OpticalParams o;
  double prev = -1.0;
  for (double pw = 0.0; pw <= 10.0; pw += 0.5) {
    p.mw_power_w = pw;
    const double v = steady_state(p, depth_averaged_polarization(o), 1.0);
    CHECK(v >= prev);
    prev = v;
  }
  p = {};
  prev = -1.0;
  for (double i0 = 0.0; i0 <= 200.0; i0 += 5.0) {
    o.surface_intensity_w_cm2 = i0;
    const double v = steady_state(p, depth_averaged_polarization(o), 1.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("uniform drive without diffusion follows the scalar solution in every cell") {
  DnpParams p;
  p.diffusion_nm2_per_s = 0.0;
  RadialGeometry g;
  g.cells = 40;
  g.outer_radius_nm = 5.0;
  g.drive_radius_nm = 5.0;
  const double rate = p.drive_rate() + 1.0 / p.nuclear_t1_s;
  const auto r = buildup_pde_1d(p, g, kPnv, 0.5, std::vector<double>{2.0, 20.0});
  for (std::size_t k = 0; k < 2; ++k) {
    const double t = k == 0 ? 2.0 : 20.0;
    const double single = p.drive_rate() * 0.5 * kPnv / rate * -std::expm1(-rate * t);
    for (double v : r.profiles[k]) CHECK_THAT(v, WithinRel(single, 1e-10));
  }
}
