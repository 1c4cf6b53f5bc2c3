#pragma once

// YAML run configuration. Every section is optional and falls back to the
// documented defaults; unknown keys are rejected with the offending line.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvdnp/calibration.hpp"
#include "nvdnp/coil_field.hpp"
#include "nvdnp/dnp_kinetics.hpp"
#include "nvdnp/nmr_signal.hpp"
#include "nvdnp/optical_pump.hpp"
#include "nvdnp/spin_model.hpp"

namespace nvdnp::app {

/// Malformed or invalid configuration. `what()` starts with "<source>:<line>:"
/// when the location is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CrystalConfig {
  int aligned_axis = 0;
  double sample_rotation_deg = 0.0;
};

struct OdmrConfig {
  spin::FrequencyGrid grid{8800.0, 14800.0, 6001};
  double linewidth_mhz = 8.0;
  double contrast = 0.05;
};

struct OpticalConfig {
  optical::OpticalParams params;
  bool transverse_average = false;
  double face_half_width_mm = 1.0;
};

struct SweepConfig {
  spin::Branch branch = spin::Branch::Lower;
  double start_offset_mhz = -20.0;
  double stop_offset_mhz = 20.0;
  std::size_t points = 161;
};

enum class BuildupModel { TwoCompartment, Radial };

struct BuildupConfig {
  spin::Branch branch = spin::Branch::Lower;
  double drive_offset_mhz = -4.497;  ///< microwave offset from the branch centre
  double t_max_s = 200.0;
  std::size_t points = 201;
  BuildupModel model = BuildupModel::TwoCompartment;
  std::size_t cells = 64;
};

struct NmrConfig {
  nmr::FidParams fid{};
  nmr::ProcessingOptions processing{};
};

struct CoilConfig {
  coil::CoilGeometry geometry;
  double b0_angle_deg = 45.0;
  Eigen::Vector3d calibration_point_mm = Eigen::Vector3d::Zero();
  bool uniform_field = false;
  coil::GridSpec grid;
  Eigen::Vector3d slab_size_mm{2.0, 2.0, 0.32};
  double cylinder_diameter_mm = 3.7;
  double cylinder_height_mm = 2.0;
  std::optional<Eigen::Vector3d> sample_center_mm;  ///< default: resting on the sample plane
  std::size_t quadrature_points = 100000;

  coil::PulseCalibration calibration() const;
  coil::Slab slab() const;
  coil::Cylinder cylinder() const;
};

struct SampleConfig {
  std::string kind;  ///< diamond | dmso | acetonitrile | liquid
  calibration::SampleSpec spec;
};

struct CalibrationConfig {
  calibration::CalibrationInputs inputs;
  std::optional<SampleConfig> sample;
  std::optional<SampleConfig> reference;
  std::optional<double> field_mt;        ///< for the computed thermal polarization
  std::optional<double> temperature_k;
  double gyromag_mhz_per_mt = 0.010708;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "nvdnp_out";
  spin::NvSystem nv;
  bool allow_d_override = false;
  spin::FieldConfig field{420.0, 0.0, 0.0};
  CrystalConfig crystal;
  OdmrConfig odmr;
  OpticalConfig optical;
  dnp::DnpParams dnp;
  SweepConfig dnp_sweep;
  BuildupConfig buildup;
  NmrConfig nmr;
  CoilConfig coil;
  CalibrationConfig calibration;

  /// NV polarization seen by the DNP model: depth average, or depth and
  /// face average when `optical.transverse_average` is set.
  double nv_polarization() const;
};

/// `section.key=value` assignments applied on top of the file.
struct Override {
  std::string path;
  std::string value;
};

Override parse_override(const std::string& text);

/// Parse `text` (YAML) plus overrides, validate every module's invariants.
RunConfig load_config(const std::string& text, const std::vector<Override>& overrides = {},
                      const std::string& source = "config");
RunConfig load_config_file(const std::string& path, const std::vector<Override>& overrides = {});

/// Standalone calibration-inputs document. Amplitudes, scan counts, the
/// spin counts (n13c_* or sample/reference specs) and the reference thermal
/// polarization (explicit or from field_mt and temperature_k) are required.
CalibrationConfig load_calibration_inputs(const std::string& text,
                                          const std::string& source = "inputs");
CalibrationConfig load_calibration_inputs_file(const std::string& path);

/// Fully resolved inputs: spin counts and thermal polarization filled in.
calibration::CalibrationInputs resolve(const CalibrationConfig& config);

}  // namespace nvdnp::app
