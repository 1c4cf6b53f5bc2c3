#pragma once

// Ratiometric polarization calibration against a thermally polarized
// reference sample.

namespace nvdnp::calibration {

inline constexpr double kPlanck = 6.62607015e-34;       // J s
inline constexpr double kBoltzmann = 1.380649e-23;      // J / K
inline constexpr double kCarbonMolarMass = 12.011;      // g / mol

/// Spin-1/2 Boltzmann polarization tanh(h nu / 2 k T), nu = gamma B.
double thermal_polarization(double gyromag_mhz_per_mt, double field_mt, double temperature_k);

enum class SampleKind { Diamond, Liquid };

struct SampleSpec {
  SampleKind kind = SampleKind::Diamond;
  double mass_mg = 0.0;             ///< diamond
  double volume_ul = 0.0;           ///< liquid
  double density_g_per_ml = 0.0;    ///< liquid
  double molar_mass_g_per_mol = 0.0;  ///< liquid
  int carbons_per_molecule = 1;     ///< liquid
  double abundance_13c = 0.0107;

  void validate() const;

  static SampleSpec diamond(double mass_mg, double abundance = 0.011);
  /// 13C-enriched dimethyl sulfoxide.
  static SampleSpec dmso(double volume_ul, double density = 1.10, double abundance = 0.99);
  /// 13C-enriched acetonitrile.
  static SampleSpec acetonitrile(double volume_ul, double density = 0.786,
                                 double abundance = 0.99);
};

/// Moles of 13C in the sample.
double count_13c(const SampleSpec& spec);

/// Amplitudes follow the summed-spectrum convention: the per-scan amplitude
/// is amplitude / scans.
struct CalibrationInputs {
  double amp_sample = 0.0;
  double amp_reference = 0.0;
  double scans_sample = 0.0;
  double scans_reference = 0.0;
  double n13c_sample = 0.0;
  double n13c_reference = 0.0;
  double sensitivity_ratio = 0.99;  ///< reference sensitivity / sample sensitivity
  double reference_thermal_polarization = 0.0;

  void validate() const;
};

/// Sample polarization over reference polarization:
/// (amp_s / amp_r) (scans_r / scans_s) (n_r / n_s) * sensitivity_ratio.
double enhancement(const CalibrationInputs& inputs);

/// enhancement * reference thermal polarization; throws
/// PhysicalImpossibility if the result exceeds 1.
double absolute_polarization(double enhancement, double reference_thermal);

struct CalibrationReport {
  double amplitude_ratio = 0.0;
  double scan_ratio = 0.0;   ///< scans_r / scans_s
  double spin_ratio = 0.0;   ///< n_s / n_r
  double sensitivity_ratio = 0.0;
  double enhancement = 0.0;
  double reference_thermal_polarization = 0.0;
  double polarization = 0.0;
};

CalibrationReport calibrate(const CalibrationInputs& inputs);

}  // namespace nvdnp::calibration
