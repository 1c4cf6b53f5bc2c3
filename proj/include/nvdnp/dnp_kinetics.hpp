#pragma once

// Phenomenological DNP model: a signed solid-effect frequency profile, a
// microwave saturation law and the buildup of bulk 13C polarization through
// direct transfer near NV centres, spin diffusion and nuclear T1.

#include <span>
#include <utility>
#include <vector>

#include "nvdnp/spin_model.hpp"

namespace nvdnp::dnp {

struct DnpParams {
  double transfer_rate_per_s = 1.5;        ///< peak forbidden-transition rate Wmax
  double nuclear_larmor_mhz = 4.497;       ///< 13C Larmor frequency
  double esr_linewidth_mhz = 8.0;          ///< FWHM of the NV transition
  double diffusion_nm2_per_s = 650.0;      ///< nuclear spin diffusion coefficient
  double nuclear_t1_s = 300.0;             ///< may be +infinity
  double proximal_fraction = 0.05;         ///< 13C fraction inside the transfer shell
  double nv_spacing_nm = 10.0;             ///< mean inter-NV distance
  double mw_power_w = 1.3;
  double mw_sat_power_w = 1.0;

  void validate() const;

  /// Effective transfer rate W = Wmax * power_saturation.
  double drive_rate() const;

  /// Exchange rate between the proximal shell and the bulk,
  /// Dsd / (spacing / 2)^2.
  double exchange_rate() const;
};

/// Sign convention for the two ODMR branches. The upper branch is taken as
/// positive; the lower one has the opposite electron polarization.
int branch_sign(spin::Branch branch);

/// Unit-peak Lorentzian of full width `fwhm`.
double lorentzian(double offset, double fwhm);

/// eta(delta) = sign [L(delta - wn) - L(delta + wn)], delta = mw - centre.
double frequency_profile(const DnpParams& params, double mw_freq_mhz, double center_mhz,
                         int sign);

/// Offset from the centre of the positive-delta extremum of the profile.
double profile_extremum_offset(const DnpParams& params);

/// Pmw / (Pmw + Psat).
double power_saturation(const DnpParams& params);

struct BuildupCurve {
  std::vector<double> times_s;
  std::vector<double> polarization;
};

/// Two-compartment state: proximal shell and bulk polarization.
struct CompartmentState {
  double proximal = 0.0;
  double bulk = 0.0;
};

/// Linear rate model dx/dt = A x + b for the two-compartment system.
struct TwoCompartmentModel {
  double a11, a12, a21, a22;
  double b1;

  static TwoCompartmentModel from(const DnpParams& params, double nv_polarization,
                                  double efficiency);

  CompartmentState derivative(const CompartmentState& x) const;
  CompartmentState steady() const;
  /// Exact propagation by the 2x2 matrix exponential.
  CompartmentState evolve(const CompartmentState& x0, double t) const;
};

/// Bulk polarization vs time from zero initial polarization. `t_grid` must be
/// ascending and start at or after 0.
BuildupCurve buildup_two_compartment(const DnpParams& params, double nv_polarization,
                                     double efficiency, std::span<const double> t_grid);

/// Closed-form fixed point of the bulk compartment.
double steady_state(const DnpParams& params, double nv_polarization, double efficiency);

/// Buildup sampled at each delay of a saturation-recovery experiment.
std::vector<std::pair<double, double>> saturation_recovery(const DnpParams& params,
                                                           double nv_polarization,
                                                           double efficiency,
                                                           std::span<const double> delays_s);

struct RadialGeometry {
  std::size_t cells = 64;
  double outer_radius_nm = 5.0;  ///< reflecting boundary, half the NV spacing
  double drive_radius_nm = 0.0;  ///< direct-transfer shell radius

  /// Geometry consistent with the two-compartment parameters: outer radius
  /// half the spacing, drive shell holding `proximal_fraction` of the volume.
  static RadialGeometry from(const DnpParams& params, std::size_t cells = 64);
};

struct RadialBuildup {
  BuildupCurve curve;                            ///< volume-averaged polarization
  std::vector<double> cell_centers_nm;
  std::vector<std::vector<double>> profiles;     ///< per time, per cell
};

/// Finite-volume solution of
///   dP/dt = Dsd lap(P) + W(r) (eta P_NV - P) - P / T1
/// on a sphere around one NV centre with a reflecting outer boundary. The
/// semi-discrete linear system is integrated exactly through the
/// eigen-decomposition of its symmetrized generator, so there is no step
/// size restriction. `initial` (per cell) defaults to zero.
RadialBuildup buildup_pde_1d(const DnpParams& params, const RadialGeometry& geometry,
                             double nv_polarization, double efficiency,
                             std::span<const double> t_grid,
                             std::span<const double> initial = {});

/// Volume-averaged steady state of the radial model.
double steady_state_pde(const DnpParams& params, const RadialGeometry& geometry,
                        double nv_polarization, double efficiency);

}  // namespace nvdnp::dnp
