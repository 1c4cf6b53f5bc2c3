#pragma once

// FID synthesis and the processing chain: exponential apodization, discrete
// Fourier transform, zero/first-order phase correction and single-line
// Lorentzian fitting with Student-t confidence intervals.

#include <complex>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace nvdnp::nmr {

using Complex = std::complex<double>;

struct TimeSeries {
  double dwell_s = 0.0;
  std::vector<Complex> samples;

  double time_at(std::size_t k) const { return dwell_s * static_cast<double>(k); }
  void validate() const;
};

/// DFT output with the zero frequency centred. `source_length` and
/// `dwell_s` describe the time series it came from.
struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<Complex> values;
  double dwell_s = 0.0;
  std::size_t source_length = 0;

  double bin_width_hz() const { return 1.0 / (static_cast<double>(source_length) * dwell_s); }
};

struct FidParams {
  double polarization = 1.0;
  double signal_scale = 1.0;   ///< amplitude per unit polarization
  double freq_offset_hz = 0.0;
  double phase_rad = 0.0;
  double t2_star_s = 1e-3;
  double noise_sigma = 0.0;    ///< per quadrature component
  std::size_t points = 2048;
  double dwell_s = 50e-6;
  std::uint64_t seed = 1;
};

/// A exp(i (2 pi f t + phase)) exp(-t / T2*) + complex Gaussian noise with
/// A = polarization * signal_scale.
TimeSeries synthesize_fid(const FidParams& params);

/// Multiply sample k by exp(-t_k / decay_constant).
TimeSeries apodize(const TimeSeries& fid, double decay_constant_s = 1e-3);

/// X_k = sum_n x_n exp(-2 pi i k n / N), reordered so the axis runs from
/// -floor(N/2) to ceil(N/2)-1 bins. The inverse carries the 1/N factor.
Spectrum to_spectrum(const TimeSeries& fid);

/// Inverse of `to_spectrum`.
TimeSeries to_time_series(const Spectrum& spectrum);

struct FrequencyWindow {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

struct PhaseCorrection {
  double zero_order_rad = 0.0;
  double first_order_rad_per_hz = 0.0;
};

/// Multiply by exp(-i (phi0 + phi1 f)).
Spectrum apply_phase(const Spectrum& spectrum, const PhaseCorrection& phase);

/// Zero-order phase maximizing the summed real part over `window`.
PhaseCorrection auto_phase(const Spectrum& spectrum, const FrequencyWindow& window);

/// Window of +/- `half_width_hz` around the largest-magnitude bin, snapped to
/// bin centres so it is symmetric in bins about the peak.
FrequencyWindow window_around_peak(const Spectrum& spectrum, double half_width_hz);

enum class LineShape {
  Lorentzian,         ///< a / (1 + ((f - f0) / hwhm)^2) + b; `amplitude` is the peak height
  SampledLorentzian,  ///< real part of the DFT of a sampled decaying exponential; `amplitude` is the time-domain amplitude
};

struct LorentzianFit {
  double amplitude = 0.0;
  double center_hz = 0.0;
  double hwhm_hz = 0.0;
  double baseline = 0.0;
  std::pair<double, double> amplitude_ci95{};
  std::pair<double, double> center_ci95{};
  std::pair<double, double> hwhm_ci95{};
  double residual_rms = 0.0;
  std::size_t points = 0;
  int iterations = 0;
  std::vector<double> cost_history;
};

/// Model value at frequency `f_hz` for the given shape and parameters.
double line_model(LineShape shape, const Spectrum& axis_info, double f_hz, double amplitude,
                  double center_hz, double hwhm_hz, double baseline);

/// Correlation between the real parts of spectrum bins `m` apart when white
/// time-domain noise is multiplied by exp(-t / decay_constant) before the
/// transform: sum w^2 cos(2 pi m n / N) / sum w^2, m = 0..N-1.
std::vector<double> apodized_noise_correlation(std::size_t points, double dwell_s,
                                               double decay_constant_s);

/// Nonlinear least-squares fit of the real part of `spectrum` inside
/// `window`. With `noise_correlation` (indexed by bin lag, as returned by
/// apodized_noise_correlation) the intervals use the sandwich covariance and
/// a Satterthwaite effective degree of freedom; otherwise bins are taken as
/// independent. Throws InvalidArgument for fewer than 8 points and
/// NumericalFailure on non-convergence.
LorentzianFit fit_lorentzian(const Spectrum& spectrum, const FrequencyWindow& window,
                             LineShape shape = LineShape::SampledLorentzian,
                             std::span<const double> noise_correlation = {});

struct BuildupFit {
  double steady_state = 0.0;
  double time_constant_s = 0.0;
  std::pair<double, double> steady_state_ci95{};
  std::pair<double, double> time_constant_ci95{};
  double residual_rms = 0.0;
};

/// Fit A(t) = P_ss (1 - exp(-t / tau)). Throws InvalidArgument for fewer than
/// four points or unsorted times and NumericalFailure for degenerate data or
/// a non-physical time constant.
BuildupFit fit_buildup(std::span<const double> times_s, std::span<const double> amplitudes);

struct ProcessingOptions {
  double apodization_s = 1e-3;  ///< <= 0 or infinite disables apodization
  double window_half_width_hz = 0.0;  ///< <= 0 selects 20 estimated HWHM
  LineShape shape = LineShape::SampledLorentzian;
};

struct ProcessingResult {
  Spectrum spectrum;  ///< phased
  PhaseCorrection phase;
  FrequencyWindow window;
  LorentzianFit fit;
};

/// apodize -> to_spectrum -> auto_phase -> fit_lorentzian.
ProcessingResult process_fid(const TimeSeries& fid, const ProcessingOptions& options = {});

}  // namespace nvdnp::nmr
