#include "nvdnp/calibration.hpp"

#include <cmath>
#include <string>

#include "nvdnp/errors.hpp"

namespace nvdnp::calibration {

double thermal_polarization(double gyromag_mhz_per_mt, double field_mt, double temperature_k) {
  if (!(temperature_k > 0.0)) throw InvalidArgument("temperature must be positive");
  const double nu_hz = gyromag_mhz_per_mt * field_mt * 1e6;
  return std::tanh(kPlanck * nu_hz / (2.0 * kBoltzmann * temperature_k));
}

void SampleSpec::validate() const {
  if (!(abundance_13c >= 0.0 && abundance_13c <= 1.0)) {
    throw InvalidArgument("13C abundance must lie in [0, 1]");
  }
  if (kind == SampleKind::Diamond) {
    if (!(mass_mg > 0.0)) throw InvalidArgument("diamond mass must be positive");
    return;
  }
  if (!(volume_ul > 0.0) || !(density_g_per_ml > 0.0) || !(molar_mass_g_per_mol > 0.0) ||
      carbons_per_molecule < 1) {
    throw InvalidArgument("liquid volume, density, molar mass and carbon count must be positive");
  }
}

SampleSpec SampleSpec::diamond(double mass_mg, double abundance) {
  SampleSpec s;
  s.kind = SampleKind::Diamond;
  s.mass_mg = mass_mg;
  s.abundance_13c = abundance;
  return s;
}

SampleSpec SampleSpec::dmso(double volume_ul, double density, double abundance) {
  SampleSpec s;
  s.kind = SampleKind::Liquid;
  s.volume_ul = volume_ul;
  s.density_g_per_ml = density;
  s.molar_mass_g_per_mol = 78.13;
  s.carbons_per_molecule = 2;
  s.abundance_13c = abundance;
  return s;
}

SampleSpec SampleSpec::acetonitrile(double volume_ul, double density, double abundance) {
  SampleSpec s;
  s.kind = SampleKind::Liquid;
  s.volume_ul = volume_ul;
  s.density_g_per_ml = density;
  s.molar_mass_g_per_mol = 41.05;
  s.carbons_per_molecule = 2;
  s.abundance_13c = abundance;
  return s;
}

double count_13c(const SampleSpec& spec) {
  spec.validate();
  if (spec.kind == SampleKind::Diamond) {
    return spec.mass_mg * 1e-3 / kCarbonMolarMass * spec.abundance_13c;
  }
  const double grams = spec.volume_ul * 1e-3 * spec.density_g_per_ml;
  return grams / spec.molar_mass_g_per_mol * spec.carbons_per_molecule * spec.abundance_13c;
}

void CalibrationInputs::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string(name) + " must be positive");
    }
  };
  positive(amp_sample, "amp_sample");
  positive(amp_reference, "amp_reference");
  positive(scans_sample, "scans_sample");
  positive(scans_reference, "scans_reference");
  positive(n13c_sample, "n13c_sample");
  positive(n13c_reference, "n13c_reference");
  positive(sensitivity_ratio, "sensitivity_ratio");
  positive(reference_thermal_polarization, "reference_thermal_polarization");
}

double enhancement(const CalibrationInputs& in) {
  if (in.amp_reference == 0.0) throw InvalidArgument("reference amplitude is zero");
  in.validate();
  return (in.amp_sample / in.amp_reference) * (in.scans_reference / in.scans_sample) *
         (in.n13c_reference / in.n13c_sample) * in.sensitivity_ratio;
}

double absolute_polarization(double enhancement, double reference_thermal) {
  if (!(enhancement > 0.0) || !(reference_thermal > 0.0)) {
    throw InvalidArgument("enhancement and thermal polarization must be positive");
  }
  const double p = enhancement * reference_thermal;
  if (p > 1.0) {
    throw PhysicalImpossibility("calibrated polarization " + std::to_string(p) +
                                " exceeds 1; check amplitudes, scan counts and spin counts");
  }
  return p;
}

CalibrationReport calibrate(const CalibrationInputs& in) {
  CalibrationReport r;
  r.enhancement = enhancement(in);
  r.amplitude_ratio = in.amp_sample / in.amp_reference;
  r.scan_ratio = in.scans_reference / in.scans_sample;
  r.spin_ratio = in.n13c_sample / in.n13c_reference;
  r.sensitivity_ratio = in.sensitivity_ratio;
  r.reference_thermal_polarization = in.reference_thermal_polarization;
  r.polarization = absolute_polarization(r.enhancement, in.reference_thermal_polarization);
  return r;
}

}  // namespace nvdnp::calibration
