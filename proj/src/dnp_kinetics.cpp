#include "nvdnp/dnp_kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "nvdnp/errors.hpp"

namespace nvdnp::dnp {

namespace {

double relaxation_rate(const DnpParams& params) {
  return std::isinf(params.nuclear_t1_s) ? 0.0 : 1.0 / params.nuclear_t1_s;
}

void check_drive(double nv_polarization, double efficiency) {
  if (!(std::abs(nv_polarization * efficiency) <= 1.0)) {
    throw InvalidArgument("|efficiency * NV polarization| must not exceed 1");
  }
}

void check_time_grid(std::span<const double> t_grid) {
  if (!t_grid.empty() && !(t_grid.front() >= 0.0)) {
    throw InvalidArgument("time grid must start at t >= 0");
  }
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] >= t_grid[i - 1])) throw InvalidArgument("time grid must be ascending");
  }
}

}  // namespace

void DnpParams::validate() const {
  if (!(transfer_rate_per_s >= 0.0)) throw InvalidArgument("transfer rate must be >= 0");
  if (!(nuclear_larmor_mhz > 0.0)) throw InvalidArgument("nuclear Larmor frequency must be > 0");
  if (!(esr_linewidth_mhz > 0.0)) throw InvalidArgument("ESR linewidth must be > 0");
  if (!(diffusion_nm2_per_s >= 0.0)) throw InvalidArgument("diffusion coefficient must be >= 0");
  if (!(nuclear_t1_s > 0.0)) throw InvalidArgument("nuclear T1 must be > 0");
  if (!(proximal_fraction > 0.0 && proximal_fraction < 1.0)) {
    throw InvalidArgument("proximal fraction must lie in (0, 1)");
  }
  if (!(nv_spacing_nm > 0.0)) throw InvalidArgument("NV spacing must be > 0");
  if (!(mw_power_w >= 0.0)) throw InvalidArgument("microwave power must be >= 0");
  if (!(mw_sat_power_w > 0.0)) throw InvalidArgument("microwave saturation power must be > 0");
}

double DnpParams::drive_rate() const { return transfer_rate_per_s * power_saturation(*this); }

double DnpParams::exchange_rate() const {
  const double half = 0.5 * nv_spacing_nm;
  return diffusion_nm2_per_s / (half * half);
}

int branch_sign(spin::Branch branch) { return branch == spin::Branch::Upper ? 1 : -1; }

double lorentzian(double offset, double fwhm) {
  const double x = 2.0 * offset / fwhm;
  return 1.0 / (1.0 + x * x);
}

double frequency_profile(const DnpParams& params, double mw_freq_mhz, double center_mhz,
                         int sign) {
  if (!(params.esr_linewidth_mhz > 0.0)) throw InvalidArgument("ESR linewidth must be > 0");
  const double delta = mw_freq_mhz - center_mhz;
  const double wn = params.nuclear_larmor_mhz;
  const double lw = params.esr_linewidth_mhz;
  return static_cast<double>(sign) * (lorentzian(delta - wn, lw) - lorentzian(delta + wn, lw));
}

double profile_extremum_offset(const DnpParams& params) {
  // The positive lobe peaks beyond wn; golden-section search on [0, wn + 4 lw].
  auto f = [&](double d) { return frequency_profile(params, d, 0.0, 1); };
  double a = 0.0, b = params.nuclear_larmor_mhz + 4.0 * params.esr_linewidth_mhz;
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    if (f(c) > f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - ratio * (b - a);
    d = a + ratio * (b - a);
  }
  return 0.5 * (a + b);
}

double power_saturation(const DnpParams& params) {
  if (!(params.mw_power_w >= 0.0)) throw InvalidArgument("microwave power must be >= 0");
  return params.mw_power_w / (params.mw_power_w + params.mw_sat_power_w);
}

TwoCompartmentModel TwoCompartmentModel::from(const DnpParams& params, double nv_polarization,
                                              double efficiency) {
  params.validate();
  check_drive(nv_polarization, efficiency);
  const double w = params.drive_rate();
  const double k = params.exchange_rate();
  const double f = params.proximal_fraction;
  const double r1 = relaxation_rate(params);
  return {-w - k / f - r1, k / f, k / (1.0 - f), -k / (1.0 - f) - r1,
          w * efficiency * nv_polarization};
}

CompartmentState TwoCompartmentModel::derivative(const CompartmentState& x) const {
  return {a11 * x.proximal + a12 * x.bulk + b1, a21 * x.proximal + a22 * x.bulk};
}

CompartmentState TwoCompartmentModel::steady() const {
  const double det = a11 * a22 - a12 * a21;
  if (det == 0.0) {
    if (b1 == 0.0) return {};
    throw NumericalFailure("two-compartment model has no steady state (no loss channel)");
  }
  return {-b1 * a22 / det, b1 * a21 / det};
}

CompartmentState TwoCompartmentModel::evolve(const CompartmentState& x0, double t) const {
  const CompartmentState ss = steady();
  const double d1 = x0.proximal - ss.proximal;
  const double d2 = x0.bulk - ss.bulk;

  // exp(A t) = e^{st} [cosh(qt) I + sinh(qt)/q (A - s I)]
  const double s = 0.5 * (a11 + a22);
  const double half_diff = 0.5 * (a11 - a22);
  const double q = std::sqrt(std::max(half_diff * half_diff + a12 * a21, 0.0));
  const double e1 = std::exp((s + q) * t);
  const double e2 = std::exp((s - q) * t);
  const double ch = 0.5 * (e1 + e2);
  const double qt = q * t;
  const double sh_q = qt > 1e-6 ? (e1 - e2) / (2.0 * q) : t * std::exp(s * t) * (1.0 + qt * qt / 6.0);

  const double m11 = ch + sh_q * (a11 - s);
  const double m12 = sh_q * a12;
  const double m21 = sh_q * a21;
  const double m22 = ch + sh_q * (a22 - s);
  return {ss.proximal + m11 * d1 + m12 * d2, ss.bulk + m21 * d1 + m22 * d2};
}

BuildupCurve buildup_two_compartment(const DnpParams& params, double nv_polarization,
                                     double efficiency, std::span<const double> t_grid) {
  check_time_grid(t_grid);
  const auto model = TwoCompartmentModel::from(params, nv_polarization, efficiency);
  BuildupCurve curve;
  curve.times_s.assign(t_grid.begin(), t_grid.end());
  curve.polarization.reserve(t_grid.size());
  for (double t : t_grid) curve.polarization.push_back(model.evolve({}, t).bulk);
  return curve;
}

double steady_state(const DnpParams& params, double nv_polarization, double efficiency) {
  return TwoCompartmentModel::from(params, nv_polarization, efficiency).steady().bulk;
}

std::vector<std::pair<double, double>> saturation_recovery(const DnpParams& params,
                                                           double nv_polarization,
                                                           double efficiency,
                                                           std::span<const double> delays_s) {
  const auto model = TwoCompartmentModel::from(params, nv_polarization, efficiency);
  std::vector<std::pair<double, double>> out;
  out.reserve(delays_s.size());
  for (double delay : delays_s) {
    if (!(delay >= 0.0)) throw InvalidArgument("saturation-recovery delays must be >= 0");
    out.emplace_back(delay, model.evolve({}, delay).bulk);
  }
  return out;
}

RadialGeometry RadialGeometry::from(const DnpParams& params, std::size_t cells) {
  RadialGeometry g;
  g.cells = cells;
  g.outer_radius_nm = 0.5 * params.nv_spacing_nm;
  g.drive_radius_nm = g.outer_radius_nm * std::cbrt(params.proximal_fraction);
  return g;
}

namespace {

// Semi-discrete radial operator dP/dt = M P + c with M = V^{-1}(-L) - diag(w + r1).
struct RadialSystem {
  Eigen::VectorXd volume;
  Eigen::VectorXd center;
  Eigen::MatrixXd generator;  // M
  Eigen::VectorXd source;     // c
};

RadialSystem assemble(const DnpParams& params, const RadialGeometry& geometry,
                      double nv_polarization, double efficiency) {
  params.validate();
  check_drive(nv_polarization, efficiency);
  if (geometry.cells < 32) throw InvalidArgument("radial model needs at least 32 cells");
  if (!(geometry.outer_radius_nm > 0.0)) throw InvalidArgument("outer radius must be > 0");
  if (!(geometry.drive_radius_nm >= 0.0 && geometry.drive_radius_nm <= geometry.outer_radius_nm)) {
    throw InvalidArgument("drive radius must lie within [0, outer radius]");
  }

  const auto n = static_cast<Eigen::Index>(geometry.cells);
  const double dr = geometry.outer_radius_nm / static_cast<double>(n);
  const double w = params.drive_rate();
  const double r1 = relaxation_rate(params);
  const double rd3 = std::pow(geometry.drive_radius_nm, 3);

  RadialSystem sys;
  sys.volume.resize(n);
  sys.center.resize(n);
  sys.source.resize(n);
  sys.generator = Eigen::MatrixXd::Zero(n, n);

  Eigen::VectorXd drive(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r_in = dr * static_cast<double>(i);
    const double r_out = dr * static_cast<double>(i + 1);
    const double v_in = r_in * r_in * r_in, v_out = r_out * r_out * r_out;
    sys.volume(i) = (v_out - v_in) / 3.0;
    sys.center(i) = 0.5 * (r_in + r_out);
    const double inside = std::clamp(rd3, v_in, v_out) - v_in;
    drive(i) = w * inside / (v_out - v_in);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    sys.generator(i, i) = -drive(i) - r1;
    sys.source(i) = drive(i) * efficiency * nv_polarization;
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double face = dr * static_cast<double>(i + 1);
    const double conductance = params.diffusion_nm2_per_s * face * face / dr;
    sys.generator(i, i) -= conductance / sys.volume(i);
    sys.generator(i + 1, i + 1) -= conductance / sys.volume(i + 1);
    sys.generator(i, i + 1) += conductance / sys.volume(i);
    sys.generator(i + 1, i) += conductance / sys.volume(i + 1);
  }
  return sys;
}

double volume_mean(const Eigen::VectorXd& p, const Eigen::VectorXd& volume) {
  return p.dot(volume) / volume.sum();
}

}  // namespace

RadialBuildup buildup_pde_1d(const DnpParams& params, const RadialGeometry& geometry,
                             double nv_polarization, double efficiency,
                             std::span<const double> t_grid, std::span<const double> initial) {
  check_time_grid(t_grid);
  const RadialSystem sys = assemble(params, geometry, nv_polarization, efficiency);
  const Eigen::Index n = sys.volume.size();
  if (!initial.empty() && static_cast<Eigen::Index>(initial.size()) != n) {
    throw InvalidArgument("initial profile length must equal the cell count");
  }

  const Eigen::VectorXd sqrt_v = sys.volume.cwiseSqrt();
  const Eigen::MatrixXd symmetric =
      sqrt_v.asDiagonal() * sys.generator * sqrt_v.cwiseInverse().asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (symmetric + symmetric.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalFailure("radial eigen-decomposition failed");
  const Eigen::MatrixXd& q = eig.eigenvectors();
  const Eigen::VectorXd& lambda = eig.eigenvalues();

  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(initial.size()); ++i) p0(i) = initial[i];
  const Eigen::VectorXd z0 = q.transpose() * sqrt_v.cwiseProduct(p0);
  const Eigen::VectorXd h = q.transpose() * sqrt_v.cwiseProduct(sys.source);

  RadialBuildup out;
  out.cell_centers_nm.assign(sys.center.data(), sys.center.data() + n);
  out.curve.times_s.assign(t_grid.begin(), t_grid.end());
  for (double t : t_grid) {
    Eigen::VectorXd z(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double lt = lambda(k) * t;
      const double phi = lambda(k) == 0.0 ? t : std::expm1(lt) / lambda(k);
      z(k) = z0(k) * std::exp(lt) + h(k) * phi;
    }
    const Eigen::VectorXd p = (q * z).cwiseQuotient(sqrt_v);
    out.curve.polarization.push_back(volume_mean(p, sys.volume));
    out.profiles.emplace_back(p.data(), p.data() + n);
  }
  return out;
}

double steady_state_pde(const DnpParams& params, const RadialGeometry& geometry,
                        double nv_polarization, double efficiency) {
  const RadialSystem sys = assemble(params, geometry, nv_polarization, efficiency);
  if (sys.source.isZero(0.0)) return 0.0;
  const Eigen::VectorXd p = sys.generator.partialPivLu().solve(-sys.source);
  if (!p.allFinite()) throw NumericalFailure("radial model has no steady state");
  return volume_mean(p, sys.volume);
}

}  // namespace nvdnp::dnp
