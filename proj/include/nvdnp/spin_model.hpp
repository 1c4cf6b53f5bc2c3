#pragma once

// NV- ground-state spin-1 Hamiltonian, transitions and ODMR rendering.
//
// Basis ordering for all 3x3 operators is |ms=+1>, |ms=0>, |ms=-1> with the
// quantization axis along the NV symmetry axis. Energies are in MHz.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nvdnp::spin {

using Matrix3c = Eigen::Matrix3cd;

struct NvSystem {
  double zero_field_splitting_mhz = 2870.0;
  double electron_gyromag_mhz_per_mt = 28.025;
  double nuclear_gyromag_mhz_per_mt = 0.010708;

  /// Throws InvalidArgument on non-positive constants, or on D outside
  /// [2800, 2900] MHz unless `allow_d_override` is set.
  void validate(bool allow_d_override = false) const;
};

struct FieldConfig {
  double magnitude_mt = 0.0;
  double polar_deg = 0.0;    ///< angle between B and the NV axis, [0, 180]
  double azimuth_deg = 0.0;  ///< does not affect eigenvalues

  void validate() const;
};

enum class Branch { Lower, Upper };

/// Eigen-decomposition of a Hermitian 3x3 matrix. Values ascending; column k
/// of `vectors` belongs to values[k].
struct EigenSystem {
  std::array<double, 3> values{};
  Matrix3c vectors = Matrix3c::Identity();
};

/// ms=0 <-> ms=-1-like (`lower_mhz`) and ms=0 <-> ms=+1-like (`upper_mhz`)
/// transition frequencies. Branches are labeled by continuity from the
/// aligned configuration, so for strongly misaligned fields above the
/// ground-state crossover the "lower" branch can exceed the "upper" one.
struct Transitions {
  double lower_mhz = 0.0;
  double upper_mhz = 0.0;
  std::array<double, 3> eigenvalues_mhz{};
  int zero_like_index = 0;  ///< index into eigenvalues_mhz

  double frequency(Branch branch) const {
    return branch == Branch::Upper ? upper_mhz : lower_mhz;
  }
};

/// Standard spin-1 angular momentum matrices.
Matrix3c spin_x();
Matrix3c spin_y();
Matrix3c spin_z();

/// H = D Sz^2 + gamma_e B (sin(theta) cos(phi) Sx + sin(theta) sin(phi) Sy + cos(theta) Sz)
Matrix3c build_hamiltonian(const NvSystem& sys, const FieldConfig& field);

/// Trigonometric Cardano roots of the characteristic polynomial, Newton
/// polished. Eigenvectors come from row cross products; near-degenerate
/// eigenvalues fall back to Jacobi for the vectors.
EigenSystem eigensolve_analytic(const Matrix3c& h);

/// Cyclic complex Jacobi rotations until the off-diagonal norm is below
/// `tolerance` times the Frobenius norm.
EigenSystem eigensolve_jacobi(const Matrix3c& h, double tolerance = 1e-15);

Transitions transition_frequencies(const NvSystem& sys, const FieldConfig& field);

/// Misalignment angle in [0, 90] degrees at which `branch` sits at
/// `observed_mhz`. Throws NumericalFailure when the frequency is not reached
/// on [0, 90] or the branch is not monotone there.
double angle_from_transition(const NvSystem& sys, double field_mt,
                             double observed_mhz, Branch branch);

struct CrystalAxis {
  Eigen::Vector3d direction;  ///< crystal frame, unit length
  double angle_to_field_deg = 0.0;
};

/// The four <111> NV axes of a <100>-surface crystal whose `aligned_axis`
/// (0..3) is set parallel to B. `sample_rotation_deg` rotates the sample
/// about the axis perpendicular to both B and the surface normal (the
/// laser direction).
std::array<CrystalAxis, 4> crystal_axes(int aligned_axis = 0,
                                        double sample_rotation_deg = 0.0);

struct FrequencyGrid {
  double start_mhz = 0.0;
  double stop_mhz = 0.0;
  std::size_t points = 1;

  std::vector<double> values() const;
};

struct OdmrSpectrum {
  std::vector<double> frequency_mhz;
  std::vector<double> contrast;
};

/// Fluorescence-dip spectrum. Each transition contributes a Lorentzian dip
/// of full width `linewidth_mhz` and depth `peak_contrast`; dips combine
/// multiplicatively on the fluorescence so contrast stays within [0, 1].
OdmrSpectrum synthesize_odmr(std::span<const double> transitions_mhz,
                             double linewidth_mhz, double peak_contrast,
                             const FrequencyGrid& grid);

}  // namespace nvdnp::spin
