#pragma once

// Biot-Savart model of a planar multi-turn NMR coil and the position-
// dependent receive sensitivity derived from it.
//
// Coil frame: the coil lies in the plane z = 0 centred on the z axis.
// Lengths are in mm; fields are in tesla per ampere.

#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace nvdnp::coil {

enum class TurnLayout { Concentric, Archimedean };

struct CoilGeometry {
  int turns = 50;
  double inner_radius_mm = 1.0;
  double outer_radius_mm = 6.0;
  TurnLayout layout = TurnLayout::Concentric;
  int segments_per_turn = 256;  ///< archimedean layout and segment quadrature
  double plane_offset_mm = 1.0;  ///< height of the sample plane above the coil

  void validate() const;
  /// Radius of concentric turn `i`, equally spaced from inner to outer.
  double turn_radius(int i) const;
};

/// Minimum distance to a filament below which the field is rejected.
inline constexpr double kFilamentExclusionMm = 1e-3;

/// Field of a single circular loop of radius `radius_mm` in the plane z = 0
/// (complete elliptic integrals).
Eigen::Vector3d loop_field(double radius_mm, const Eigen::Vector3d& point_mm);

/// On-axis closed form mu0 a^2 / (2 (a^2 + z^2)^{3/2}).
double loop_field_on_axis(double radius_mm, double z_mm);

/// Coil field per unit current. Concentric turns use the elliptic-integral
/// loop field; the archimedean spiral is summed segment by segment. Throws
/// InvalidArgument within kFilamentExclusionMm of a filament.
Eigen::Vector3d b1_field(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm);

/// Straight-segment Biot-Savart sum with `segments_per_turn` chords per turn.
Eigen::Vector3d b1_field_segmented(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm,
                                   int segments_per_turn);

/// Unit static-field direction tilted by `angle_deg` from the coil axis
/// towards +x.
Eigen::Vector3d static_field_direction(double angle_deg);

/// |B1 - (B1 . b0) b0| for unit `b0_dir`.
double effective_b1_perp(const Eigen::Vector3d& b1, const Eigen::Vector3d& b0_dir);
double effective_b1_perp(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm,
                         const Eigen::Vector3d& b0_dir);

/// Pulse calibration: the nominal pi/2 rotation is reached at `calibration_point`.
struct PulseCalibration {
  CoilGeometry geometry;
  Eigen::Vector3d b0_dir = static_field_direction(45.0);
  Eigen::Vector3d calibration_point_mm = Eigen::Vector3d::Zero();
  bool uniform_field = false;  ///< debug mode: B1 identical everywhere

  /// Rotation angle (pi/2) B1perp(r) / B1perp(calibration point). Throws
  /// InvalidArgument if the calibration field vanishes.
  double flip_angle(const Eigen::Vector3d& point_mm) const;

  /// Receive sensitivity B1perp(r) sin(theta(r)) normalized to 1 at the
  /// calibration point.
  double sensitivity(const Eigen::Vector3d& point_mm) const;

 private:
  double calibration_field() const;
};

struct Axis {
  double min = 0.0;
  double max = 0.0;
  std::size_t points = 2;

  double at(std::size_t i) const;
  double step() const { return (max - min) / static_cast<double>(points - 1); }
};

struct GridSpec {
  Axis x{-2.5, 2.5, 51};
  Axis y{-2.5, 2.5, 51};
  Axis z{0.1, 2.5, 49};
};

/// Flip-angle or sensitivity values on a rectilinear grid; x runs fastest.
struct GridMap {
  GridSpec grid;
  std::vector<double> values;

  double at(std::size_t ix, std::size_t iy, std::size_t iz) const;
  bool contains(const Eigen::Vector3d& point_mm) const;
  /// Trilinear interpolation; throws InvalidArgument outside the grid.
  double interpolate(const Eigen::Vector3d& point_mm) const;
};

using SensitivityMap = GridMap;

/// Evaluate `fn` on every grid point. Slices are spread over threads; the
/// result does not depend on the partitioning.
GridMap evaluate_on_grid(const GridSpec& grid, const std::function<double(const Eigen::Vector3d&)>& fn);

GridMap flip_angle_map(const PulseCalibration& calibration, const GridSpec& grid);
SensitivityMap sensitivity_map(const PulseCalibration& calibration, const GridSpec& grid);

/// Rectangular block with edges along the coil frame axes.
struct Slab {
  Eigen::Vector3d center_mm = Eigen::Vector3d::Zero();
  Eigen::Vector3d size_mm{2.0, 2.0, 0.32};
};

/// Upright cylinder, axis parallel to the coil axis.
struct Cylinder {
  Eigen::Vector3d center_mm = Eigen::Vector3d::Zero();
  double diameter_mm = 3.7;
  double height_mm = 2.0;
};

using SampleShape = std::variant<Slab, Cylinder>;

/// Common centre for both samples: the slab rests on the sample plane and
/// the cylinder shares its centre.
Eigen::Vector3d default_sample_center(const CoilGeometry& geometry, const Slab& slab = {});

/// Midpoint-rule volume average of `fn` over `shape` with at least
/// `min_points` quadrature nodes.
double shape_average(const std::function<double(const Eigen::Vector3d&)>& fn,
                     const SampleShape& shape, std::size_t min_points = 100000);

/// Volume-averaged sensitivity. Throws InvalidArgument if the shape leaves
/// the map's grid.
double sample_average(const SensitivityMap& map, const SampleShape& shape,
                      std::size_t min_points = 100000);

}  // namespace nvdnp::coil
