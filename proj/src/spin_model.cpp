#include "nvdnp/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "nvdnp/errors.hpp"

namespace nvdnp::spin {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

double deg2rad(double deg) { return deg * kPi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / kPi; }

Eigen::Vector3cd bilinear_cross(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
  return {a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0)};
}

// Coefficients of det(lambda I - H) = lambda^3 - c2 lambda^2 + c1 lambda - c0.
struct CharPoly {
  double c2, c1, c0;

  double value(double x) const { return ((x - c2) * x + c1) * x - c0; }
  double slope(double x) const { return (3.0 * x - 2.0 * c2) * x + c1; }
};

CharPoly char_poly(const Matrix3c& h) {
  const double a = h(0, 0).real(), b = h(1, 1).real(), c = h(2, 2).real();
  const double n01 = std::norm(h(0, 1)), n02 = std::norm(h(0, 2)), n12 = std::norm(h(1, 2));
  return {a + b + c, a * b + a * c + b * c - n01 - n02 - n12, h.determinant().real()};
}

double polish_root(const CharPoly& poly, double x) {
  for (int it = 0; it < 3; ++it) {
    const double slope = poly.slope(x);
    if (slope == 0.0) break;
    const double next = x - poly.value(x) / slope;
    if (!(std::abs(poly.value(next)) < std::abs(poly.value(x)))) break;
    x = next;
  }
  return x;
}

}  // namespace

void NvSystem::validate(bool allow_d_override) const {
  if (!(zero_field_splitting_mhz > 0.0) || !(electron_gyromag_mhz_per_mt > 0.0) ||
      !(nuclear_gyromag_mhz_per_mt > 0.0)) {
    throw InvalidArgument("NV system constants must be strictly positive");
  }
  if (!allow_d_override &&
      (zero_field_splitting_mhz < 2800.0 || zero_field_splitting_mhz > 2900.0)) {
    throw InvalidArgument("zero-field splitting " + std::to_string(zero_field_splitting_mhz) +
                          " MHz outside [2800, 2900]; set the override flag to allow it");
  }
}

void FieldConfig::validate() const {
  if (!(magnitude_mt >= 0.0) || !std::isfinite(magnitude_mt)) {
    throw InvalidArgument("field magnitude must be finite and >= 0");
  }
  if (!(polar_deg >= 0.0 && polar_deg <= 180.0)) {
    throw InvalidArgument("polar angle must lie in [0, 180] degrees");
  }
  if (!std::isfinite(azimuth_deg)) throw InvalidArgument("azimuth must be finite");
}

Matrix3c spin_x() {
  const double s = 1.0 / std::numbers::sqrt2;
  Matrix3c m;
  m << 0, s, 0, s, 0, s, 0, s, 0;
  return m;
}

Matrix3c spin_y() {
  const double s = 1.0 / std::numbers::sqrt2;
  const cd i(0.0, 1.0);
  Matrix3c m;
  m << 0, -i * s, 0, i * s, 0, -i * s, 0, i * s, 0;
  return m;
}

Matrix3c spin_z() {
  Matrix3c m = Matrix3c::Zero();
  m(0, 0) = 1.0;
  m(2, 2) = -1.0;
  return m;
}

Matrix3c build_hamiltonian(const NvSystem& sys, const FieldConfig& field) {
  field.validate();
  const double theta = deg2rad(field.polar_deg);
  const double phi = deg2rad(field.azimuth_deg);
  const double zeeman = sys.electron_gyromag_mhz_per_mt * field.magnitude_mt;
  const Matrix3c sz = spin_z();
  Matrix3c h = sys.zero_field_splitting_mhz * (sz * sz);
  h += zeeman * (std::sin(theta) * std::cos(phi) * spin_x() +
                 std::sin(theta) * std::sin(phi) * spin_y() + std::cos(theta) * sz);
  return h;
}

EigenSystem eigensolve_jacobi(const Matrix3c& h, double tolerance) {
  Matrix3c a = h;
  Matrix3c v = Matrix3c::Identity();
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  auto off_norm = [&a] {
    return std::sqrt(2.0 * (std::norm(a(0, 1)) + std::norm(a(0, 2)) + std::norm(a(1, 2))));
  };

  for (int sweep = 0; sweep < 64 && off_norm() > tolerance * scale; ++sweep) {
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const cd apq = a(p, q);
        const double mag = std::abs(apq);
        if (mag == 0.0) continue;
        const cd phase = apq / mag;
        const double app = a(p, p).real(), aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * mag);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        Matrix3c u = Matrix3c::Identity();
        u(p, p) = c;
        u(p, q) = s;
        u(q, p) = -s * std::conj(phase);
        u(q, q) = c * std::conj(phase);
        a = u.adjoint() * a * u;
        v = v * u;
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&a](int i, int j) { return a(i, i).real() < a(j, j).real(); });
  EigenSystem out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = a(order[k], order[k]).real();
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

EigenSystem eigensolve_analytic(const Matrix3c& h) {
  const double q = h.trace().real() / 3.0;
  const double p1 = std::norm(h(0, 1)) + std::norm(h(0, 2)) + std::norm(h(1, 2));
  const double d0 = h(0, 0).real() - q, d1 = h(1, 1).real() - q, d2 = h(2, 2).real() - q;
  const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);

  EigenSystem out;
  if (p == 0.0) {
    out.values = {q, q, q};
    return out;
  }

  const Matrix3c b = (h - q * Matrix3c::Identity()) / p;
  const double r = std::clamp(b.determinant().real() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double largest = q + 2.0 * p * std::cos(phi);
  const double smallest = q + 2.0 * p * std::cos(phi + 2.0 * kPi / 3.0);
  const double middle = 3.0 * q - largest - smallest;

  const CharPoly poly = char_poly(h);
  out.values = {polish_root(poly, smallest), polish_root(poly, middle),
                polish_root(poly, largest)};
  std::sort(out.values.begin(), out.values.end());

  const double span = std::max({std::abs(out.values[0]), std::abs(out.values[2]), p});
  const double min_gap = std::min(out.values[1] - out.values[0], out.values[2] - out.values[1]);
  if (min_gap <= 1e-9 * span) {
    out.vectors = eigensolve_jacobi(h).vectors;
    return out;
  }

  for (int k = 0; k < 3; ++k) {
    const Matrix3c m = h - out.values[k] * Matrix3c::Identity();
    const Eigen::Vector3cd r0 = m.row(0).transpose(), r1 = m.row(1).transpose(),
                           r2 = m.row(2).transpose();
    const std::array<Eigen::Vector3cd, 3> candidates{bilinear_cross(r0, r1),
                                                     bilinear_cross(r0, r2),
                                                     bilinear_cross(r1, r2)};
    const auto best = std::max_element(candidates.begin(), candidates.end(),
                                       [](const auto& x, const auto& y) {
                                         return x.squaredNorm() < y.squaredNorm();
                                       });
    out.vectors.col(k) = best->normalized();
  }
  return out;
}

Transitions transition_frequencies(const NvSystem& sys, const FieldConfig& field) {
  const EigenSystem eig = eigensolve_analytic(build_hamiltonian(sys, field));
  const double zeeman = sys.electron_gyromag_mhz_per_mt * field.magnitude_mt;
  const double d = sys.zero_field_splitting_mhz;

  // The eigenvalue order does not change for polar angles in (0, 90] (and by
  // symmetry [90, 180)), so labels are fixed by the aligned ordering:
  // ms=0 is lowest below the crossover gamma_e B = D and second above it.
  int zero_like = 0;
  if (zeeman > d) {
    zero_like = 1;
  } else if (std::abs(zeeman - d) <= 1e-12 * d) {
    zero_like = std::norm(eig.vectors(1, 1)) > std::norm(eig.vectors(1, 0)) ? 1 : 0;
  }
  const int minus_like = zero_like == 0 ? 1 : 0;

  Transitions t;
  t.eigenvalues_mhz = eig.values;
  t.zero_like_index = zero_like;
  t.lower_mhz = std::abs(eig.values[minus_like] - eig.values[zero_like]);
  t.upper_mhz = eig.values[2] - eig.values[zero_like];
  return t;
}

double angle_from_transition(const NvSystem& sys, double field_mt, double observed_mhz,
                             Branch branch) {
  auto freq_at = [&](double theta_deg) {
    return transition_frequencies(sys, {field_mt, theta_deg, 0.0}).frequency(branch);
  };

  std::array<double, 91> samples{};
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = freq_at(static_cast<double>(i));
  const bool increasing = std::is_sorted(samples.begin(), samples.end(), std::less_equal<>());
  const bool decreasing = std::is_sorted(samples.begin(), samples.end(), std::greater_equal<>());
  if (!increasing && !decreasing) {
    throw NumericalFailure("transition branch is not monotone in the polar angle on [0, 90] deg");
  }
  if (increasing && decreasing) {
    throw NumericalFailure("transition branch does not depend on the polar angle (zero field)");
  }

  const double f_lo = std::min(samples.front(), samples.back());
  const double f_hi = std::max(samples.front(), samples.back());
  const double slack = 1e-9 * f_hi;
  if (observed_mhz < f_lo - slack || observed_mhz > f_hi + slack) {
    throw NumericalFailure("no solution in [0, 90] deg: " + std::to_string(observed_mhz) +
                           " MHz is outside [" + std::to_string(f_lo) + ", " +
                           std::to_string(f_hi) + "] MHz");
  }

  // Bracket holds g(lo) <= 0 <= g(hi) after orienting by monotone direction.
  const double sign = increasing ? 1.0 : -1.0;
  double lo = 0.0, hi = 90.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sign * (freq_at(mid) - observed_mhz) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double theta = 0.5 * (lo + hi);
  const double residual = std::abs(freq_at(theta) - observed_mhz);
  if (residual >= 0.01) {
    throw NumericalFailure("angle inversion residual " + std::to_string(residual) + " MHz");
  }
  return theta;
}

std::array<CrystalAxis, 4> crystal_axes(int aligned_axis, double sample_rotation_deg) {
  if (aligned_axis < 0 || aligned_axis > 3) {
    throw InvalidArgument("aligned axis index must be in 0..3");
  }
  const double inv = 1.0 / std::sqrt(3.0);
  const std::array<Eigen::Vector3d, 4> axes{
      Eigen::Vector3d(1, 1, 1) * inv, Eigen::Vector3d(1, -1, -1) * inv,
      Eigen::Vector3d(-1, 1, -1) * inv, Eigen::Vector3d(-1, -1, 1) * inv};
  const Eigen::Vector3d surface_normal(0, 0, 1);

  const Eigen::Vector3d aligned = axes[aligned_axis];
  const Eigen::Vector3d vertical = aligned.cross(surface_normal).normalized();
  // Rotating the sample by +alpha rotates the field by -alpha in the crystal frame.
  const Eigen::AngleAxisd rotation(-deg2rad(sample_rotation_deg), vertical);
  const Eigen::Vector3d field_dir = (rotation * aligned).normalized();

  std::array<CrystalAxis, 4> out;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const double c = std::clamp(axes[i].dot(field_dir), -1.0, 1.0);
    out[i] = {axes[i], rad2deg(std::acos(c))};
  }
  return out;
}

std::vector<double> FrequencyGrid::values() const {
  if (points == 0) throw InvalidArgument("frequency grid needs at least one point");
  if (!(stop_mhz >= start_mhz)) throw InvalidArgument("frequency grid must be ascending");
  std::vector<double> v(points);
  if (points == 1) {
    v[0] = start_mhz;
    return v;
  }
  const double step = (stop_mhz - start_mhz) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) v[i] = start_mhz + step * static_cast<double>(i);
  v.back() = stop_mhz;
  return v;
}

OdmrSpectrum synthesize_odmr(std::span<const double> transitions_mhz, double linewidth_mhz,
                             double peak_contrast, const FrequencyGrid& grid) {
  if (!(linewidth_mhz > 0.0)) throw InvalidArgument("ODMR linewidth must be positive");
  if (!(peak_contrast > 0.0 && peak_contrast <= 1.0)) {
    throw InvalidArgument("peak contrast must lie in (0, 1]");
  }
  OdmrSpectrum spec;
  spec.frequency_mhz = grid.values();
  spec.contrast.resize(spec.frequency_mhz.size());
  const double hwhm = 0.5 * linewidth_mhz;
  for (std::size_t i = 0; i < spec.frequency_mhz.size(); ++i) {
    double fluorescence = 1.0;
    for (double center : transitions_mhz) {
      const double x = (spec.frequency_mhz[i] - center) / hwhm;
      fluorescence *= 1.0 - peak_contrast / (1.0 + x * x);
    }
    spec.contrast[i] = 1.0 - fluorescence;
  }
  return spec;
}

}  // namespace nvdnp::spin
