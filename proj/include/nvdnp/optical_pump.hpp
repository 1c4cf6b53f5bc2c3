#pragma once

namespace nvdnp::optical {

struct OpticalParams {
  double surface_intensity_w_cm2 = 16.0;
  double absorption_per_mm = 9.0;
  double thickness_mm = 0.32;
  double beam_waist_mm = 1.5;
  double saturation_intensity_w_cm2 = 10.0;
  double max_nv_polarization = 0.8;

  /// Absorption may be zero (transparent limit); everything else must be
  /// positive and the maximum polarization at most 1.
  void validate() const;
};

/// Beer-Lambert attenuation, I0 exp(-alpha z). Throws for z outside the slab.
double intensity_at_depth(const OpticalParams& params, double depth_mm);

/// Fraction of the incident light leaving the back face.
double transmission(const OpticalParams& params);

/// Gaussian beam profile exp(-2 r^2 / w^2).
double transverse_profile(const OpticalParams& params, double radius_mm);

/// Saturating optical pumping law Pmax I / (I + Isat).
double nv_polarization(const OpticalParams& params, double intensity_w_cm2);

/// Mean NV polarization over the slab depth (adaptive Gauss-Kronrod).
double depth_averaged_polarization(const OpticalParams& params);

/// Mean NV polarization over depth and a square face of half-width
/// `half_width_mm` centred on the beam, including the transverse profile.
double face_averaged_polarization(const OpticalParams& params, double half_width_mm);

}  // namespace nvdnp::optical
