#include "nvdnp/coil_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include <Eigen/Geometry>

#include "nvdnp/errors.hpp"

namespace nvdnp::coil {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMu0 = 4e-7 * kPi;
constexpr double kMmToM = 1e-3;

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Exact field of a straight filament from a to b (mm) at p, unit current.
Eigen::Vector3d segment_field(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  const Eigen::Vector3d ra = (a - p) * kMmToM;
  const Eigen::Vector3d rb = (b - p) * kMmToM;
  const double na = ra.norm(), nb = rb.norm();
  const double denom = na * nb * (na * nb + ra.dot(rb));
  if (denom <= 0.0) return Eigen::Vector3d::Zero();
  return kMu0 / (4.0 * kPi) * ra.cross(rb) * (na + nb) / denom;
}

template <typename Fn>
void for_each_filament(const CoilGeometry& g, int segments_per_turn, Fn&& fn) {
  if (g.layout == TurnLayout::Concentric) {
    for (int t = 0; t < g.turns; ++t) {
      const double r = g.turn_radius(t);
      Eigen::Vector3d prev(r, 0.0, 0.0);
      for (int s = 1; s <= segments_per_turn; ++s) {
        const double phi = 2.0 * kPi * s / segments_per_turn;
        const Eigen::Vector3d next(r * std::cos(phi), r * std::sin(phi), 0.0);
        fn(prev, next);
        prev = next;
      }
    }
    return;
  }
  const int total = g.turns * segments_per_turn;
  const double sweep = 2.0 * kPi * g.turns;
  auto spiral = [&](int s) {
    const double phi = sweep * s / total;
    const double r = g.inner_radius_mm + (g.outer_radius_mm - g.inner_radius_mm) * phi / sweep;
    return Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), 0.0);
  };
  Eigen::Vector3d prev = spiral(0);
  for (int s = 1; s <= total; ++s) {
    const Eigen::Vector3d next = spiral(s);
    fn(prev, next);
    prev = next;
  }
}

void reject_near_filament(double distance_mm) {
  if (distance_mm < kFilamentExclusionMm) {
    throw InvalidArgument("field point lies within 1 um of a coil filament (distance " +
                          std::to_string(distance_mm) + " mm)");
  }
}

}  // namespace

void CoilGeometry::validate() const {
  if (turns < 1) throw InvalidArgument("coil needs at least one turn");
  if (!(inner_radius_mm > 0.0 && inner_radius_mm <= outer_radius_mm)) {
    throw InvalidArgument("coil radii must satisfy 0 < inner <= outer");
  }
  if (segments_per_turn < 8) throw InvalidArgument("need at least 8 segments per turn");
  if (!std::isfinite(plane_offset_mm)) throw InvalidArgument("plane offset must be finite");
}

double CoilGeometry::turn_radius(int i) const {
  if (turns == 1) return inner_radius_mm;
  return inner_radius_mm + (outer_radius_mm - inner_radius_mm) * i / (turns - 1);
}

double loop_field_on_axis(double radius_mm, double z_mm) {
  const double a = radius_mm * kMmToM, z = z_mm * kMmToM;
  return kMu0 * a * a / (2.0 * std::pow(a * a + z * z, 1.5));
}

Eigen::Vector3d loop_field(double radius_mm, const Eigen::Vector3d& point_mm) {
  const double a = radius_mm * kMmToM;
  const double x = point_mm.x() * kMmToM, y = point_mm.y() * kMmToM, z = point_mm.z() * kMmToM;
  const double rho = std::hypot(x, y);

  if (rho < 1e-4 * a) {
    // Near-axis expansion; the elliptic form cancels catastrophically here.
    const double s2 = a * a + z * z;
    const double bz = kMu0 * a * a / (2.0 * std::pow(s2, 1.5));
    const double brho = 3.0 * kMu0 * a * a * z * rho / (4.0 * std::pow(s2, 2.5));
    const double c = rho > 0.0 ? x / rho : 0.0, s = rho > 0.0 ? y / rho : 0.0;
    return {brho * c, brho * s, bz};
  }

  const double r2 = rho * rho + z * z;
  const double alpha2 = a * a + r2 - 2.0 * a * rho;
  const double beta2 = a * a + r2 + 2.0 * a * rho;
  const double beta = std::sqrt(beta2);
  const double k = std::sqrt(std::max(0.0, 1.0 - alpha2 / beta2));
  const double kk = std::comp_ellint_1(k);
  const double ek = std::comp_ellint_2(k);
  const double c0 = kMu0 / kPi;

  const double bz = c0 / (2.0 * alpha2 * beta) * ((a * a - r2) * ek + alpha2 * kk);
  const double brho = c0 * z / (2.0 * alpha2 * beta * rho) * ((a * a + r2) * ek - alpha2 * kk);
  return {brho * x / rho, brho * y / rho, bz};
}

Eigen::Vector3d b1_field_segmented(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm,
                                   int segments_per_turn) {
  geometry.validate();
  Eigen::Vector3d field = Eigen::Vector3d::Zero();
  double closest = std::numeric_limits<double>::infinity();
  for_each_filament(geometry, segments_per_turn,
                    [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
                      closest = std::min(closest, point_segment_distance(point_mm, a, b));
                      field += segment_field(point_mm, a, b);
                    });
  reject_near_filament(closest);
  return field;
}

Eigen::Vector3d b1_field(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm) {
  geometry.validate();
  if (geometry.layout == TurnLayout::Archimedean) {
    return b1_field_segmented(geometry, point_mm, geometry.segments_per_turn);
  }
  const double rho = std::hypot(point_mm.x(), point_mm.y());
  Eigen::Vector3d field = Eigen::Vector3d::Zero();
  for (int t = 0; t < geometry.turns; ++t) {
    const double r = geometry.turn_radius(t);
    reject_near_filament(std::hypot(rho - r, point_mm.z()));
    field += loop_field(r, point_mm);
  }
  return field;
}

Eigen::Vector3d static_field_direction(double angle_deg) {
  const double a = angle_deg * kPi / 180.0;
  return {std::sin(a), 0.0, std::cos(a)};
}

double effective_b1_perp(const Eigen::Vector3d& b1, const Eigen::Vector3d& b0_dir) {
  if (std::abs(b0_dir.norm() - 1.0) > 1e-9) {
    throw InvalidArgument("static field direction must be a unit vector");
  }
  return (b1 - b1.dot(b0_dir) * b0_dir).norm();
}

double effective_b1_perp(const CoilGeometry& geometry, const Eigen::Vector3d& point_mm,
                         const Eigen::Vector3d& b0_dir) {
  return effective_b1_perp(b1_field(geometry, point_mm), b0_dir);
}

double PulseCalibration::calibration_field() const {
  if (uniform_field) return 1.0;
  const double ref = effective_b1_perp(geometry, calibration_point_mm, b0_dir);
  if (!(ref > 0.0)) {
    throw InvalidArgument("effective B1 vanishes at the calibration point");
  }
  return ref;
}

double PulseCalibration::flip_angle(const Eigen::Vector3d& point_mm) const {
  const double ref = calibration_field();
  if (uniform_field) return kPi / 2.0;
  return kPi / 2.0 * effective_b1_perp(geometry, point_mm, b0_dir) / ref;
}

double PulseCalibration::sensitivity(const Eigen::Vector3d& point_mm) const {
  if (uniform_field) return 1.0;
  const double rel = effective_b1_perp(geometry, point_mm, b0_dir) / calibration_field();
  return rel * std::sin(kPi / 2.0 * rel);
}

double Axis::at(std::size_t i) const {
  if (points == 1) return min;
  return i + 1 == points ? max : min + step() * static_cast<double>(i);
}

double GridMap::at(std::size_t ix, std::size_t iy, std::size_t iz) const {
  return values[(iz * grid.y.points + iy) * grid.x.points + ix];
}

bool GridMap::contains(const Eigen::Vector3d& p) const {
  auto inside = [](const Axis& a, double v) {
    const double slack = 1e-12 * std::max(1.0, std::abs(a.max - a.min));
    return v >= a.min - slack && v <= a.max + slack;
  };
  return inside(grid.x, p.x()) && inside(grid.y, p.y()) && inside(grid.z, p.z());
}

double GridMap::interpolate(const Eigen::Vector3d& p) const {
  if (!contains(p)) throw InvalidArgument("point lies outside the sensitivity grid");
  auto locate = [](const Axis& a, double v, std::size_t& i, double& frac) {
    const double u = std::clamp((v - a.min) / a.step(), 0.0, static_cast<double>(a.points - 1));
    i = std::min(static_cast<std::size_t>(u), a.points - 2);
    frac = u - static_cast<double>(i);
  };
  std::size_t ix, iy, iz;
  double fx, fy, fz;
  locate(grid.x, p.x(), ix, fx);
  locate(grid.y, p.y(), iy, fy);
  locate(grid.z, p.z(), iz, fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
        if (w != 0.0) acc += w * at(ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

GridMap evaluate_on_grid(const GridSpec& grid,
                         const std::function<double(const Eigen::Vector3d&)>& fn) {
  for (const Axis* a : {&grid.x, &grid.y, &grid.z}) {
    if (a->points < 2 || !(a->max > a->min)) {
      throw InvalidArgument("grid axes need at least 2 points and max > min");
    }
  }
  GridMap map{grid, std::vector<double>(grid.x.points * grid.y.points * grid.z.points)};
  const std::size_t slices = grid.z.points;
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, slices);

  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t iz = w; iz < slices; iz += workers) {
        for (std::size_t iy = 0; iy < grid.y.points; ++iy) {
          for (std::size_t ix = 0; ix < grid.x.points; ++ix) {
            map.values[(iz * grid.y.points + iy) * grid.x.points + ix] =
                fn({grid.x.at(ix), grid.y.at(iy), grid.z.at(iz)});
          }
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return map;
}

GridMap flip_angle_map(const PulseCalibration& calibration, const GridSpec& grid) {
  calibration.flip_angle(calibration.calibration_point_mm);
  return evaluate_on_grid(grid, [&](const Eigen::Vector3d& p) { return calibration.flip_angle(p); });
}

SensitivityMap sensitivity_map(const PulseCalibration& calibration, const GridSpec& grid) {
  calibration.sensitivity(calibration.calibration_point_mm);
  return evaluate_on_grid(grid,
                          [&](const Eigen::Vector3d& p) { return calibration.sensitivity(p); });
}

Eigen::Vector3d default_sample_center(const CoilGeometry& geometry, const Slab& slab) {
  return {0.0, 0.0, geometry.plane_offset_mm + 0.5 * slab.size_mm.z()};
}

double shape_average(const std::function<double(const Eigen::Vector3d&)>& fn,
                     const SampleShape& shape, std::size_t min_points) {
  const auto n = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(min_points))));
  double sum = 0.0, weight = 0.0;
  if (const auto* slab = std::get_if<Slab>(&shape)) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
          const Eigen::Vector3d u((i + 0.5) / n - 0.5, (j + 0.5) / n - 0.5, (k + 0.5) / n - 0.5);
          sum += fn(slab->center_mm + u.cwiseProduct(slab->size_mm));
        }
      }
    }
    return sum / static_cast<double>(n * n * n);
  }
  const auto& cyl = std::get<Cylinder>(shape);
  const double radius = 0.5 * cyl.diameter_mm;
  for (std::size_t k = 0; k < n; ++k) {
    const double z = cyl.center_mm.z() + cyl.height_mm * ((k + 0.5) / n - 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = radius * (i + 0.5) / n;
      for (std::size_t j = 0; j < n; ++j) {
        const double phi = 2.0 * kPi * (j + 0.5) / n;
        const Eigen::Vector3d p(cyl.center_mm.x() + r * std::cos(phi),
                                cyl.center_mm.y() + r * std::sin(phi), z);
        sum += r * fn(p);
        weight += r;
      }
    }
  }
  return sum / weight;
}

double sample_average(const SensitivityMap& map, const SampleShape& shape,
                      std::size_t min_points) {
  std::vector<Eigen::Vector3d> corners;
  if (const auto* slab = std::get_if<Slab>(&shape)) {
    for (int c = 0; c < 8; ++c) {
      const Eigen::Vector3d sign(c & 1 ? 0.5 : -0.5, c & 2 ? 0.5 : -0.5, c & 4 ? 0.5 : -0.5);
      corners.push_back(slab->center_mm + sign.cwiseProduct(slab->size_mm));
    }
  } else {
    const auto& cyl = std::get<Cylinder>(shape);
    const double r = 0.5 * cyl.diameter_mm, h = 0.5 * cyl.height_mm;
    for (int c = 0; c < 8; ++c) {
      const Eigen::Vector3d sign(c & 1 ? r : -r, c & 2 ? r : -r, c & 4 ? h : -h);
      corners.push_back(cyl.center_mm + sign);
    }
  }
  for (const auto& c : corners) {
    if (!map.contains(c)) throw InvalidArgument("sample shape extends beyond the sensitivity grid");
  }
  return shape_average([&](const Eigen::Vector3d& p) { return map.interpolate(p); }, shape,
                       min_points);
}

}  // namespace nvdnp::coil
