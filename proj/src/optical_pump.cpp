#include "nvdnp/optical_pump.hpp"

#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nvdnp/errors.hpp"

namespace nvdnp::optical {

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr double kQuadTolerance = 1e-12;
constexpr unsigned kMaxDepth = 20;

double depth_average_at(const OpticalParams& params, double surface_intensity) {
  if (params.absorption_per_mm == 0.0) return nv_polarization(params, surface_intensity);
  auto integrand = [&](double z) {
    return nv_polarization(params, surface_intensity * std::exp(-params.absorption_per_mm * z));
  };
  const double integral = gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, params.thickness_mm, kMaxDepth, kQuadTolerance);
  return integral / params.thickness_mm;
}

}  // namespace

void OpticalParams::validate() const {
  if (!(surface_intensity_w_cm2 >= 0.0)) throw InvalidArgument("surface intensity must be >= 0");
  if (!(absorption_per_mm >= 0.0)) throw InvalidArgument("absorption coefficient must be >= 0");
  if (!(thickness_mm > 0.0)) throw InvalidArgument("thickness must be positive");
  if (!(beam_waist_mm > 0.0)) throw InvalidArgument("beam waist must be positive");
  if (!(saturation_intensity_w_cm2 > 0.0)) {
    throw InvalidArgument("saturation intensity must be positive");
  }
  if (!(max_nv_polarization > 0.0 && max_nv_polarization <= 1.0)) {
    throw InvalidArgument("maximum NV polarization must lie in (0, 1]");
  }
}

double intensity_at_depth(const OpticalParams& params, double depth_mm) {
  if (!(depth_mm >= 0.0 && depth_mm <= params.thickness_mm)) {
    throw InvalidArgument("depth " + std::to_string(depth_mm) + " mm is outside the slab [0, " +
                          std::to_string(params.thickness_mm) + "] mm");
  }
  return params.surface_intensity_w_cm2 * std::exp(-params.absorption_per_mm * depth_mm);
}

double transmission(const OpticalParams& params) {
  return std::exp(-params.absorption_per_mm * params.thickness_mm);
}

double transverse_profile(const OpticalParams& params, double radius_mm) {
  if (!(radius_mm >= 0.0)) throw InvalidArgument("radius must be >= 0");
  const double x = radius_mm / params.beam_waist_mm;
  return std::exp(-2.0 * x * x);
}

double nv_polarization(const OpticalParams& params, double intensity_w_cm2) {
  if (!(intensity_w_cm2 >= 0.0)) throw InvalidArgument("intensity must be >= 0");
  return params.max_nv_polarization * intensity_w_cm2 /
         (intensity_w_cm2 + params.saturation_intensity_w_cm2);
}

double depth_averaged_polarization(const OpticalParams& params) {
  params.validate();
  return depth_average_at(params, params.surface_intensity_w_cm2);
}

double face_averaged_polarization(const OpticalParams& params, double half_width_mm) {
  params.validate();
  if (!(half_width_mm > 0.0)) throw InvalidArgument("face half-width must be positive");
  // Quarter face by symmetry.
  auto row = [&](double y) {
    auto cell = [&](double x) {
      const double r = std::hypot(x, y);
      return depth_average_at(params,
                              params.surface_intensity_w_cm2 * transverse_profile(params, r));
    };
    return gauss_kronrod<double, 15>::integrate(cell, 0.0, half_width_mm, 8, 1e-10);
  };
  const double total = gauss_kronrod<double, 15>::integrate(row, 0.0, half_width_mm, 8, 1e-10);
  return total / (half_width_mm * half_width_mm);
}

}  // namespace nvdnp::optical
