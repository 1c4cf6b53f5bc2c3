#include "nvdnp/nmr_signal.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Core>
#include <Eigen/LU>
#include <fftw3.h>

#include "nvdnp/errors.hpp"
#include "nvdnp/least_squares.hpp"

namespace nvdnp::nmr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// FFTW planning is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<Complex> fftw_transform(const std::vector<Complex>& in, int direction) {
  const int n = static_cast<int>(in.size());
  std::vector<Complex> input = in;
  std::vector<Complex> output(in.size());
  auto* src = reinterpret_cast<fftw_complex*>(input.data());
  auto* dst = reinterpret_cast<fftw_complex*>(output.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_1d(n, src, dst, direction, FFTW_ESTIMATE);
  }
  fftw_execute_dft(plan, src, dst);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return output;
}

std::vector<std::size_t> window_indices(const Spectrum& spectrum, const FrequencyWindow& window) {
  const double slack = 1e-9 * spectrum.bin_width_hz();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < spectrum.freq_hz.size(); ++i) {
    if (spectrum.freq_hz[i] >= window.lo_hz - slack && spectrum.freq_hz[i] <= window.hi_hz + slack) {
      idx.push_back(i);
    }
  }
  return idx;
}

// Value and derivative with respect to the complex exponent c of
// g(c) = (1 - z^N) / (1 - z), z = exp(c).
struct SampledLine {
  Complex value;
  Complex d_dc;
};

SampledLine sampled_line(Complex c, double n) {
  const Complex z = std::exp(c);
  const Complex zn = std::exp(n * c);
  const Complex zn1 = std::exp((n - 1.0) * c);
  const Complex one_minus_z = 1.0 - z;
  const Complex g = (1.0 - zn) / one_minus_z;
  const Complex dg = z * ((1.0 - zn) - n * zn1 * one_minus_z) / (one_minus_z * one_minus_z);
  return {g, dg};
}

Complex sampled_exponent(const Spectrum& s, double f_hz, double center_hz, double hwhm_hz) {
  return {-kTwoPi * hwhm_hz * s.dwell_s, kTwoPi * (center_hz - f_hz) * s.dwell_s};
}

std::pair<double, double> symmetric_ci(double value, double sigma, double t) {
  return {value - t * sigma, value + t * sigma};
}

}  // namespace

void TimeSeries::validate() const {
  if (!(dwell_s > 0.0)) throw InvalidArgument("dwell time must be positive");
  if (samples.size() < 2) throw InvalidArgument("time series needs at least 2 samples");
}

TimeSeries synthesize_fid(const FidParams& p) {
  if (!(p.t2_star_s > 0.0)) throw InvalidArgument("T2* must be positive");
  if (p.points < 16) throw InvalidArgument("FID needs at least 16 points");
  if (!(p.dwell_s > 0.0)) throw InvalidArgument("dwell time must be positive");
  if (!(p.noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");

  TimeSeries fid;
  fid.dwell_s = p.dwell_s;
  fid.samples.resize(p.points);
  const double amplitude = p.polarization * p.signal_scale;
  for (std::size_t k = 0; k < p.points; ++k) {
    const double t = fid.time_at(k);
    fid.samples[k] = amplitude * std::exp(Complex(-t / p.t2_star_s,
                                                  kTwoPi * p.freq_offset_hz * t + p.phase_rad));
  }
  if (p.noise_sigma > 0.0) {
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> noise(0.0, p.noise_sigma);
    for (auto& s : fid.samples) {
      const double re = noise(rng);
      const double im = noise(rng);
      s += Complex(re, im);
    }
  }
  return fid;
}

TimeSeries apodize(const TimeSeries& fid, double decay_constant_s) {
  fid.validate();
  if (!(decay_constant_s > 0.0)) throw InvalidArgument("apodization constant must be positive");
  TimeSeries out = fid;
  if (std::isinf(decay_constant_s)) return out;
  for (std::size_t k = 0; k < out.samples.size(); ++k) {
    out.samples[k] *= std::exp(-out.time_at(k) / decay_constant_s);
  }
  return out;
}

Spectrum to_spectrum(const TimeSeries& fid) {
  fid.validate();
  const std::size_t n = fid.samples.size();
  const std::vector<Complex> raw = fftw_transform(fid.samples, FFTW_FORWARD);

  Spectrum s;
  s.dwell_s = fid.dwell_s;
  s.source_length = n;
  s.freq_hz.resize(n);
  s.values.resize(n);
  const auto half = static_cast<long>(n / 2);
  const double df = s.bin_width_hz();
  for (std::size_t j = 0; j < n; ++j) {
    const long bin = static_cast<long>(j) - half;
    const auto src = static_cast<std::size_t>((bin + static_cast<long>(n)) % static_cast<long>(n));
    s.freq_hz[j] = df * static_cast<double>(bin);
    s.values[j] = raw[src];
  }
  return s;
}

TimeSeries to_time_series(const Spectrum& spectrum) {
  const std::size_t n = spectrum.values.size();
  if (n < 2 || spectrum.source_length != n) throw InvalidArgument("malformed spectrum");
  std::vector<Complex> unshifted(n);
  const auto half = static_cast<long>(n / 2);
  for (std::size_t j = 0; j < n; ++j) {
    const long bin = static_cast<long>(j) - half;
    unshifted[static_cast<std::size_t>((bin + static_cast<long>(n)) % static_cast<long>(n))] =
        spectrum.values[j];
  }
  TimeSeries out;
  out.dwell_s = spectrum.dwell_s;
  out.samples = fftw_transform(unshifted, FFTW_BACKWARD);
  for (auto& v : out.samples) v /= static_cast<double>(n);
  return out;
}

Spectrum apply_phase(const Spectrum& spectrum, const PhaseCorrection& phase) {
  if (spectrum.values.empty()) throw InvalidArgument("cannot phase an empty spectrum");
  Spectrum out = spectrum;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double angle = phase.zero_order_rad + phase.first_order_rad_per_hz * out.freq_hz[i];
    out.values[i] *= std::polar(1.0, -angle);
  }
  return out;
}

PhaseCorrection auto_phase(const Spectrum& spectrum, const FrequencyWindow& window) {
  if (spectrum.values.empty()) throw InvalidArgument("cannot phase an empty spectrum");
  // sum Re(e^{-i phi} X_k) = |S| cos(arg S - phi) peaks at phi = arg S.
  Complex sum = 0.0;
  for (std::size_t i : window_indices(spectrum, window)) sum += spectrum.values[i];
  return {sum == Complex(0.0) ? 0.0 : std::arg(sum), 0.0};
}

FrequencyWindow window_around_peak(const Spectrum& spectrum, double half_width_hz) {
  if (spectrum.values.empty()) throw InvalidArgument("empty spectrum");
  std::size_t peak = 0;
  for (std::size_t i = 1; i < spectrum.values.size(); ++i) {
    if (std::abs(spectrum.values[i]) > std::abs(spectrum.values[peak])) peak = i;
  }
  const auto half_bins = static_cast<std::size_t>(
      std::max(1.0, std::round(half_width_hz / spectrum.bin_width_hz())));
  const std::size_t lo = peak > half_bins ? peak - half_bins : 0;
  const std::size_t hi = std::min(peak + half_bins, spectrum.values.size() - 1);
  return {spectrum.freq_hz[lo], spectrum.freq_hz[hi]};
}

double line_model(LineShape shape, const Spectrum& axis_info, double f_hz, double amplitude,
                  double center_hz, double hwhm_hz, double baseline) {
  if (shape == LineShape::Lorentzian) {
    const double x = (f_hz - center_hz) / hwhm_hz;
    return amplitude / (1.0 + x * x) + baseline;
  }
  const Complex c = sampled_exponent(axis_info, f_hz, center_hz, hwhm_hz);
  const double n = static_cast<double>(axis_info.source_length);
  return amplitude * sampled_line(c, n).value.real() + baseline;
}

std::vector<double> apodized_noise_correlation(std::size_t points, double dwell_s,
                                               double decay_constant_s) {
  if (points < 2 || !(dwell_s > 0.0) || !(decay_constant_s > 0.0)) {
    throw InvalidArgument("noise correlation needs >= 2 points and positive times");
  }
  std::vector<Complex> w2(points);
  for (std::size_t k = 0; k < points; ++k) {
    const double w = std::exp(-static_cast<double>(k) * dwell_s / decay_constant_s);
    w2[k] = w * w;
  }
  const std::vector<Complex> g = fftw_transform(w2, FFTW_FORWARD);
  std::vector<double> r(points);
  for (std::size_t m = 0; m < points; ++m) r[m] = g[m].real() / g[0].real();
  return r;
}

LorentzianFit fit_lorentzian(const Spectrum& spectrum, const FrequencyWindow& window,
                             LineShape shape, std::span<const double> noise_correlation) {
  const std::vector<std::size_t> idx = window_indices(spectrum, window);
  if (idx.size() < 8) {
    throw InvalidArgument("fit window holds " + std::to_string(idx.size()) +
                          " points; at least 8 are required");
  }
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd f(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    f(i) = spectrum.freq_hz[idx[static_cast<std::size_t>(i)]];
    y(i) = spectrum.values[idx[static_cast<std::size_t>(i)]].real();
  }

  // Initial guesses from the peak and half-height crossings of a 5-bin
  // moving average, so a single noise spike cannot seed a spurious line.
  Eigen::VectorXd smooth(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - 2), hi = std::min<Eigen::Index>(m - 1, i + 2);
    smooth(i) = y.segment(lo, hi - lo + 1).mean();
  }
  Eigen::Index peak = 0;
  smooth.maxCoeff(&peak);
  const double base0 = 0.5 * (smooth(0) + smooth(m - 1));
  const double height = smooth(peak) - base0;
  Eigen::Index left = peak, right = peak;
  while (left > 0 && smooth(left) - base0 > 0.5 * height) --left;
  while (right < m - 1 && smooth(right) - base0 > 0.5 * height) ++right;
  const double bin = spectrum.bin_width_hz();
  const double hwhm0 = std::max(0.5 * (f(right) - f(left)), 0.5 * bin);
  // Parameters: amplitude, centre, log(hwhm), baseline.
  Eigen::VectorXd x0(4);
  x0 << height, f(peak), std::log(hwhm0), base0;
  const double n = static_cast<double>(spectrum.source_length);

  auto make_residual = [&](LineShape shape) {
    return [&, shape](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
      const double hw = std::exp(p(2));
      for (Eigen::Index i = 0; i < m; ++i) {
        r(i) = line_model(shape, spectrum, f(i), p(0), p(1), hw, p(3)) - y(i);
      }
    };
  };
  auto make_jacobian = [&](LineShape shape) {
    return [&, shape](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
      const double hw = std::exp(p(2));
      for (Eigen::Index i = 0; i < m; ++i) {
        if (shape == LineShape::Lorentzian) {
          const double x = (f(i) - p(1)) / hw;
          const double l = 1.0 / (1.0 + x * x);
          j(i, 0) = l;
          j(i, 1) = p(0) * 2.0 * x * l * l / hw;
          j(i, 2) = p(0) * 2.0 * x * x * l * l;
        } else {
          const SampledLine line = sampled_line(sampled_exponent(spectrum, f(i), p(1), hw), n);
          j(i, 0) = line.value.real();
          j(i, 1) = p(0) * (line.d_dc * Complex(0.0, kTwoPi * spectrum.dwell_s)).real();
          j(i, 2) = p(0) * (line.d_dc * (-kTwoPi * hw * spectrum.dwell_s)).real();
        }
        j(i, 3) = 1.0;
      }
    };
  };

  // The sampled line is periodic in its centre and can wander onto an alias
  // from a rough start; a continuous Lorentzian fit seeds it instead.
  if (shape == LineShape::SampledLorentzian) {
    try {
      const fit::LmResult pre = fit::levenberg_marquardt(make_residual(LineShape::Lorentzian), m, x0,
                                                         make_jacobian(LineShape::Lorentzian));
      if (std::abs(pre.params(1) - x0(1)) <= 0.5 * (f(m - 1) - f(0)) && std::isfinite(pre.params(2))) {
        x0 = pre.params;
      }
    } catch (const NumericalFailure&) {
    }
    x0(0) *= -std::expm1(-kTwoPi * std::exp(x0(2)) * spectrum.dwell_s);
  }

  const fit::LmResult lm =
      fit::levenberg_marquardt(make_residual(shape), m, x0, make_jacobian(shape));
  Eigen::MatrixXd cov;
  double dof = static_cast<double>(m - 4);
  if (noise_correlation.empty()) {
    cov = lm.covariance();
  } else {
    if (noise_correlation.size() != spectrum.source_length) {
      throw InvalidArgument("noise correlation length must equal the transform length");
    }
    const std::size_t len = spectrum.source_length;
    auto corr = [&](Eigen::Index a, Eigen::Index b) {
      const std::size_t ia = idx[static_cast<std::size_t>(a)], ib = idx[static_cast<std::size_t>(b)];
      return noise_correlation[(ia + len - ib) % len];
    };
    // Only R J and p x p traces are needed: with H = J A J^T and M = (I - H) R,
    //   tr M = tr R - tr(A B),  tr M^2 = tr R^2 - 2 tr(A (RJ)^T RJ) + tr(A B A B),
    // where A = (J^T J)^-1 and B = J^T R J.
    const Eigen::MatrixXd& j = lm.jacobian;
    Eigen::MatrixXd rj = Eigen::MatrixXd::Zero(m, j.cols());
    double tr_r = 0.0, tr_r2 = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        const double rab = corr(a, b);
        rj.row(a) += rab * j.row(b);
        tr_r2 += rab * rab;
      }
      tr_r += corr(a, a);
    }
    const Eigen::MatrixXd a_inv = (j.transpose() * j).inverse();
    const Eigen::MatrixXd bmat = j.transpose() * rj;
    const Eigen::MatrixXd ab = a_inv * bmat;
    const double tr = tr_r - ab.trace();
    const double tr2 = tr_r2 - 2.0 * (a_inv * (rj.transpose() * rj)).trace() + (ab * ab).trace();
    const double sigma2 = 2.0 * lm.cost / tr;
    cov = sigma2 * ab * a_inv;
    dof = tr * tr / tr2;
  }
  const double half_span = 0.5 * (f(m - 1) - f(0));
  if (!(std::abs(lm.params(1) - 0.5 * (f(0) + f(m - 1))) <= half_span) ||
      !std::isfinite(lm.params(2)) || !cov.allFinite() || !(dof > 0.0)) {
    throw NumericalFailure("Lorentzian fit left the window or has a singular covariance");
  }
  const double t = fit::student_t_quantile(0.95, dof);

  LorentzianFit out;
  out.amplitude = lm.params(0);
  out.center_hz = lm.params(1);
  out.hwhm_hz = std::exp(lm.params(2));
  out.baseline = lm.params(3);
  out.amplitude_ci95 = symmetric_ci(out.amplitude, std::sqrt(cov(0, 0)), t);
  out.center_ci95 = symmetric_ci(out.center_hz, std::sqrt(cov(1, 1)), t);
  const double log_sigma = std::sqrt(cov(2, 2));
  out.hwhm_ci95 = {out.hwhm_hz * std::exp(-t * log_sigma), out.hwhm_hz * std::exp(t * log_sigma)};
  out.residual_rms = std::sqrt(2.0 * lm.cost / static_cast<double>(m));
  out.points = idx.size();
  out.iterations = lm.iterations;
  out.cost_history = lm.cost_history;
  return out;
}

BuildupFit fit_buildup(std::span<const double> times_s, std::span<const double> amplitudes) {
  if (times_s.size() != amplitudes.size()) {
    throw InvalidArgument("buildup times and amplitudes differ in length");
  }
  if (times_s.size() < 4) throw InvalidArgument("buildup fit needs at least 4 points");
  for (std::size_t i = 1; i < times_s.size(); ++i) {
    if (!(times_s[i] > times_s[i - 1])) throw InvalidArgument("buildup times must be ascending");
  }
  const auto [min_it, max_it] = std::minmax_element(amplitudes.begin(), amplitudes.end());
  if (*max_it == *min_it) {
    throw NumericalFailure("degenerate buildup data: all amplitudes equal (" +
                           std::to_string(*max_it) + ")");
  }

  const auto m = static_cast<Eigen::Index>(times_s.size());
  const double t_max = times_s.back();
  const double p0 = amplitudes.back();
  double tau0 = t_max / 3.0;
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (std::abs(amplitudes[i]) >= (1.0 - std::exp(-1.0)) * std::abs(p0) && times_s[i] > 0.0) {
      tau0 = times_s[i];
      break;
    }
  }

  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double tau = std::exp(p(1));
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = times_s[static_cast<std::size_t>(i)];
      r(i) = p(0) * -std::expm1(-t / tau) - amplitudes[static_cast<std::size_t>(i)];
    }
  };
  auto jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
    const double tau = std::exp(p(1));
    for (Eigen::Index i = 0; i < m; ++i) {
      const double t = times_s[static_cast<std::size_t>(i)];
      const double e = std::exp(-t / tau);
      j(i, 0) = 1.0 - e;
      j(i, 1) = -p(0) * e * t / tau;
    }
  };

  Eigen::VectorXd x0(2);
  x0 << p0, std::log(tau0);
  const fit::LmResult lm = fit::levenberg_marquardt(residual, m, x0, jacobian);
  const double tau = std::exp(lm.params(1));
  if (!std::isfinite(tau) || tau > 1e3 * t_max || tau < 1e-6 * t_max) {
    throw NumericalFailure("buildup data are not a saturating exponential (fitted tau = " +
                           std::to_string(tau) + " s)");
  }

  BuildupFit out;
  out.steady_state = lm.params(0);
  out.time_constant_s = tau;
  out.residual_rms = std::sqrt(2.0 * lm.cost / static_cast<double>(m));
  if (m > 2) {
    const Eigen::MatrixXd cov = lm.covariance();
    const double t = fit::student_t_quantile(0.95, static_cast<double>(m - 2));
    out.steady_state_ci95 = symmetric_ci(out.steady_state, std::sqrt(cov(0, 0)), t);
    const double log_sigma = std::sqrt(cov(1, 1));
    out.time_constant_ci95 = {tau * std::exp(-t * log_sigma), tau * std::exp(t * log_sigma)};
  }
  return out;
}

ProcessingResult process_fid(const TimeSeries& fid, const ProcessingOptions& options) {
  const bool apodize_on = options.apodization_s > 0.0 && std::isfinite(options.apodization_s);
  const TimeSeries weighted = apodize_on ? apodize(fid, options.apodization_s) : fid;
  const Spectrum raw = to_spectrum(weighted);

  double half_width = options.window_half_width_hz;
  if (!(half_width > 0.0)) {
    // Half-maximum width of the magnitude spectrum as a linewidth estimate.
    std::size_t peak = 0;
    for (std::size_t i = 1; i < raw.values.size(); ++i) {
      if (std::abs(raw.values[i]) > std::abs(raw.values[peak])) peak = i;
    }
    const double half_max = 0.5 * std::abs(raw.values[peak]);
    std::size_t right = peak;
    while (right + 1 < raw.values.size() && std::abs(raw.values[right]) > half_max) ++right;
    half_width = std::max(20.0 * (raw.freq_hz[right] - raw.freq_hz[peak]), 8.0 * raw.bin_width_hz());
  }

  ProcessingResult out;
  out.window = window_around_peak(raw, half_width);
  out.phase = auto_phase(raw, out.window);
  out.spectrum = apply_phase(raw, out.phase);
  const std::vector<double> correlation =
      apodize_on ? apodized_noise_correlation(fid.samples.size(), fid.dwell_s, options.apodization_s)
                 : std::vector<double>{};
  out.fit = fit_lorentzian(out.spectrum, out.window, options.shape, correlation);
  return out;
}

}  // namespace nvdnp::nmr
