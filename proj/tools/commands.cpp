#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <utility>

#include <CLI11.hpp>

#include "nvdnp/csv.hpp"
#include "nvdnp/errors.hpp"

namespace nvdnp::app {

namespace {

using csv::format_number;

class Report {
 public:
  explicit Report(const std::string& command) { add("command", command); }

  void add(const std::string& key, const std::string& value) { lines_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, format_number(value)); }
  void add(const std::string& key, std::pair<double, double> ci) {
    add(key, "[" + format_number(ci.first) + ", " + format_number(ci.second) + "]");
  }

  void emit(std::ostream& out, const fs::path& file) const {
    std::ofstream f(file);
    if (!f) throw InvalidArgument("cannot open '" + file.string() + "' for writing");
    for (const auto& [k, v] : lines_) {
      out << k << ": " << v << '\n';
      f << k << ": " << v << '\n';
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n <= 1 || a == b) return {a};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = i + 1 == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return v;
}

const char* branch_name(spin::Branch b) { return b == spin::Branch::Upper ? "upper" : "lower"; }

double branch_center(const RunConfig& c, spin::Branch b) {
  return spin::transition_frequencies(c.nv, c.field).frequency(b);
}

void write_csv(const fs::path& path, const csv::Table& table) { csv::write_file(path.string(), table); }

// First time at which |P| reaches `fraction` of |target|, linearly
// interpolated; negative if never reached.
double time_to_fraction(const dnp::BuildupCurve& curve, double target, double fraction) {
  const double level = fraction * std::abs(target);
  for (std::size_t i = 0; i < curve.times_s.size(); ++i) {
    const double p = std::abs(curve.polarization[i]);
    if (p >= level) {
      if (i == 0) return curve.times_s[0];
      const double p0 = std::abs(curve.polarization[i - 1]);
      const double f = (level - p0) / (p - p0);
      return curve.times_s[i - 1] + f * (curve.times_s[i] - curve.times_s[i - 1]);
    }
  }
  return -1.0;
}

bool has_final_newline(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  if (in.tellg() <= 0) return false;
  in.seekg(-1, std::ios::end);
  char c = 0;
  in.get(c);
  return c == '\n';
}

void write_xz_section(const RunConfig& config, const fs::path& file) {
  const auto cal = config.coil.calibration();
  const double extent = 1.5 * config.coil.geometry.outer_radius_mm;
  csv::Table t{{"x_mm", "z_mm", "bx_t_per_a", "bz_t_per_a", "b1_perp_t_per_a", "flip_angle_rad",
                "sensitivity"},
               {}};
  for (double z : linspace(0.05, extent, 80)) {
    for (double x : linspace(-extent, extent, 161)) {
      const Eigen::Vector3d p(x, 0.0, z);
      const Eigen::Vector3d b = coil::b1_field(cal.geometry, p);
      t.add_row({x, z, b.x(), b.z(), coil::effective_b1_perp(b, cal.b0_dir), cal.flip_angle(p),
                 cal.sensitivity(p)});
    }
  }
  write_csv(file, t);
}

}  // namespace

void cmd_odmr(const RunConfig& config, const fs::path& dir, std::ostream& out,
              const std::string& prefix) {
  const auto axes = spin::crystal_axes(config.crystal.aligned_axis, config.crystal.sample_rotation_deg);
  csv::Table table{{"axis", "angle_deg", "lower_MHz", "upper_MHz"}, {}};
  std::vector<double> lines;
  Report report("odmr");
  report.add("field_mt", config.field.magnitude_mt);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const double angle = axes[i].angle_to_field_deg;
    const auto t = spin::transition_frequencies(config.nv, {config.field.magnitude_mt, angle, 0.0});
    table.add_row({static_cast<double>(i), angle, t.lower_mhz, t.upper_mhz});
    lines.push_back(t.lower_mhz);
    lines.push_back(t.upper_mhz);
    const std::string key = "axis_" + std::to_string(i);
    report.add(key + "_angle_deg", angle);
    report.add(key + "_lower_mhz", t.lower_mhz);
    report.add(key + "_upper_mhz", t.upper_mhz);
  }
  const auto spectrum =
      spin::synthesize_odmr(lines, config.odmr.linewidth_mhz, config.odmr.contrast, config.odmr.grid);
  csv::Table spec{{"freq_MHz", "contrast"}, {}};
  for (std::size_t i = 0; i < spectrum.frequency_mhz.size(); ++i) {
    spec.add_row({spectrum.frequency_mhz[i], spectrum.contrast[i]});
  }
  write_csv(dir / (prefix + "_transitions.csv"), table);
  write_csv(dir / (prefix + "_spectrum.csv"), spec);
  report.add("transitions_csv", prefix + "_transitions.csv");
  report.add("spectrum_csv", prefix + "_spectrum.csv");
  report.emit(out, dir / (prefix + "_report.txt"));
}

void cmd_dnp_sweep(const RunConfig& config, const fs::path& dir, std::ostream& out,
                   const std::string& prefix) {
  const auto& s = config.dnp_sweep;
  const double center = branch_center(config, s.branch);
  const int sign = dnp::branch_sign(s.branch);
  const double pnv = config.nv_polarization();
  csv::Table table{{"mw_freq_MHz", "polarization"}, {}};
  double lo = 0.0, hi = 0.0;
  for (double mw : linspace(center + s.start_offset_mhz, center + s.stop_offset_mhz, s.points)) {
    const double eff = dnp::frequency_profile(config.dnp, mw, center, sign);
    const double p = dnp::steady_state(config.dnp, pnv, eff);
    table.add_row({mw, p});
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  write_csv(dir / (prefix + ".csv"), table);
  Report report("dnp-sweep");
  report.add("branch", branch_name(s.branch));
  report.add("center_mhz", center);
  report.add("nv_polarization", pnv);
  report.add("profile_extremum_offset_mhz", dnp::profile_extremum_offset(config.dnp));
  report.add("min_polarization", lo);
  report.add("max_polarization", hi);
  report.add("rows", static_cast<double>(table.rows.size()));
  report.add("csv", prefix + ".csv");
  report.emit(out, dir / (prefix + "_report.txt"));
}

void cmd_buildup(const RunConfig& config, const fs::path& dir, std::ostream& out,
                 const std::string& prefix) {
  const auto& b = config.buildup;
  const double center = branch_center(config, b.branch);
  const double mw = center + b.drive_offset_mhz;
  const double eff = dnp::frequency_profile(config.dnp, mw, center, dnp::branch_sign(b.branch));
  const double pnv = config.nv_polarization();
  const std::vector<double> grid =
      b.t_max_s == 0.0 ? std::vector<double>{0.0} : linspace(0.0, b.t_max_s, std::max<std::size_t>(b.points, 2));

  dnp::BuildupCurve curve;
  double steady = 0.0;
  if (b.model == BuildupModel::Radial) {
    const auto geom = dnp::RadialGeometry::from(config.dnp, b.cells);
    curve = dnp::buildup_pde_1d(config.dnp, geom, pnv, eff, grid).curve;
    steady = dnp::steady_state_pde(config.dnp, geom, pnv, eff);
  } else {
    curve = dnp::buildup_two_compartment(config.dnp, pnv, eff, grid);
    steady = dnp::steady_state(config.dnp, pnv, eff);
  }

  csv::Table table{{"t_s", "polarization"}, {}};
  for (std::size_t i = 0; i < curve.times_s.size(); ++i) {
    table.add_row({curve.times_s[i], curve.polarization[i]});
  }
  write_csv(dir / (prefix + ".csv"), table);

  Report report("buildup");
  report.add("model", b.model == BuildupModel::Radial ? "radial" : "two_compartment");
  report.add("branch", branch_name(b.branch));
  report.add("mw_freq_mhz", mw);
  report.add("profile_efficiency", eff);
  report.add("nv_polarization", pnv);
  report.add("steady_state", steady);
  report.add("final_polarization", curve.polarization.back());
  if (steady != 0.0) {
    report.add("final_fraction_of_steady_state", curve.polarization.back() / steady);
    const double t95 = time_to_fraction(curve, steady, 0.95);
    report.add("time_to_95_percent_s", t95 >= 0.0 ? format_number(t95) : std::string("not reached"));
  }
  if (curve.times_s.size() >= 4 && steady != 0.0) {
    const auto fit = nmr::fit_buildup(curve.times_s, curve.polarization);
    report.add("fit_steady_state", fit.steady_state);
    report.add("fit_steady_state_ci95", fit.steady_state_ci95);
    report.add("fit_time_constant_s", fit.time_constant_s);
    report.add("fit_time_constant_ci95", fit.time_constant_ci95);
    report.add("fit_residual_rms", fit.residual_rms);
  }
  report.add("csv", prefix + ".csv");
  report.emit(out, dir / (prefix + "_report.txt"));
}

void cmd_nmr_synth(const RunConfig& config, const fs::path& dir, std::ostream& out) {
  nmr::FidParams p = config.nmr.fid;
  p.seed = config.seed;
  const auto fid = nmr::synthesize_fid(p);
  csv::Table table{{"t_s", "re", "im"}, {}};
  for (std::size_t k = 0; k < fid.samples.size(); ++k) {
    table.add_row({fid.time_at(k), fid.samples[k].real(), fid.samples[k].imag()});
  }
  write_csv(dir / "fid.csv", table);
  Report report("nmr-synth");
  report.add("points", static_cast<double>(p.points));
  report.add("dwell_s", p.dwell_s);
  report.add("seed", std::to_string(p.seed));
  report.add("csv", "fid.csv");
  report.emit(out, dir / "nmr_synth_report.txt");
}

void cmd_nmr_process(const RunConfig& config, const fs::path& fid_csv, const fs::path& dir,
                     std::ostream& out) {
  if (!has_final_newline(fid_csv)) {
    throw InvalidArgument(fid_csv.string() + ": truncated input (no final newline)");
  }
  const auto table = csv::read_file(fid_csv.string());
  const auto t = table.column("t_s");
  const auto re = table.column("re");
  const auto im = table.column("im");
  if (t.size() < 16) throw InvalidArgument(fid_csv.string() + ": need at least 16 samples");

  nmr::TimeSeries fid;
  fid.dwell_s = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(fid.dwell_s > 0.0)) throw InvalidArgument(fid_csv.string() + ": time axis must increase");
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double expected = t.front() + fid.dwell_s * static_cast<double>(k);
    if (std::abs(t[k] - expected) > 1e-3 * fid.dwell_s) {
      throw InvalidArgument(fid_csv.string() + ": line " + std::to_string(k + 2) +
                            ": time axis is not uniformly sampled");
    }
    fid.samples.emplace_back(re[k], im[k]);
  }

  const auto result = nmr::process_fid(fid, config.nmr.processing);
  csv::Table spec{{"f_Hz", "re", "im"}, {}};
  for (std::size_t i = 0; i < result.spectrum.freq_hz.size(); ++i) {
    spec.add_row({result.spectrum.freq_hz[i], result.spectrum.values[i].real(),
                  result.spectrum.values[i].imag()});
  }
  write_csv(dir / "spectrum.csv", spec);

  const auto& f = result.fit;
  Report report("nmr-process");
  report.add("points", static_cast<double>(fid.samples.size()));
  report.add("dwell_s", fid.dwell_s);
  report.add("phase_zero_order_rad", result.phase.zero_order_rad);
  report.add("window_hz", std::make_pair(result.window.lo_hz, result.window.hi_hz));
  report.add("amplitude", f.amplitude);
  report.add("amplitude_ci95", f.amplitude_ci95);
  report.add("center_hz", f.center_hz);
  report.add("center_ci95", f.center_ci95);
  report.add("hwhm_hz", f.hwhm_hz);
  report.add("hwhm_ci95", f.hwhm_ci95);
  report.add("baseline", f.baseline);
  report.add("residual_rms", f.residual_rms);
  report.add("fit_points", static_cast<double>(f.points));
  report.add("iterations", static_cast<double>(f.iterations));
  report.add("polarization_estimate", f.amplitude / config.nmr.fid.signal_scale);
  report.add("spectrum_csv", "spectrum.csv");
  report.emit(out, dir / "nmr_fit.txt");
}

void cmd_calibrate(const CalibrationConfig& inputs, const fs::path& dir, std::ostream& out,
                   const std::string& prefix) {
  const auto resolved = resolve(inputs);
  const auto r = calibration::calibrate(resolved);
  Report report("calibrate");
  if (inputs.sample) report.add("sample_kind", inputs.sample->kind);
  if (inputs.reference) report.add("reference_kind", inputs.reference->kind);
  report.add("n13c_sample_mol", resolved.n13c_sample);
  report.add("n13c_reference_mol", resolved.n13c_reference);
  report.add("amplitude_ratio", r.amplitude_ratio);
  report.add("scan_ratio", r.scan_ratio);
  report.add("spin_ratio", r.spin_ratio);
  report.add("sensitivity_ratio", r.sensitivity_ratio);
  report.add("reference_thermal_polarization", r.reference_thermal_polarization);
  report.add("enhancement", r.enhancement);
  report.add("polarization", r.polarization);
  report.emit(out, dir / (prefix + ".txt"));
}

void cmd_coil_map(const RunConfig& config, const fs::path& dir, std::ostream& out,
                  const std::string& prefix) {
  const auto& k = config.coil;
  const auto cal = k.calibration();
  const auto map = coil::sensitivity_map(cal, k.grid);
  const coil::Slab slab = k.slab();
  const coil::Cylinder cyl = k.cylinder();
  const double slab_avg = coil::sample_average(map, slab, k.quadrature_points);
  const double cyl_avg = coil::sample_average(map, cyl, k.quadrature_points);

  csv::Table table{{"x_mm", "y_mm", "z_mm", "sensitivity"}, {}};
  table.rows.reserve(map.values.size());
  for (std::size_t iz = 0; iz < k.grid.z.points; ++iz) {
    for (std::size_t iy = 0; iy < k.grid.y.points; ++iy) {
      for (std::size_t ix = 0; ix < k.grid.x.points; ++ix) {
        table.rows.push_back({k.grid.x.at(ix), k.grid.y.at(iy), k.grid.z.at(iz), map.at(ix, iy, iz)});
      }
    }
  }
  write_csv(dir / (prefix + "_sensitivity.csv"), table);

  Report report("coil-map");
  report.add("uniform_field", k.uniform_field ? "true" : "false");
  report.add("b0_angle_deg", k.b0_angle_deg);
  if (!k.uniform_field) {
    const Eigen::Vector3d b = coil::b1_field(k.geometry, k.calibration_point_mm);
    report.add("b1_at_calibration_t_per_a", b.norm());
    report.add("b1_perp_at_calibration_t_per_a", coil::effective_b1_perp(b, cal.b0_dir));
  }
  report.add("sample_center_mm", "[" + format_number(slab.center_mm.x()) + ", " +
                                     format_number(slab.center_mm.y()) + ", " +
                                     format_number(slab.center_mm.z()) + "]");
  report.add("slab_average", slab_avg);
  report.add("cylinder_average", cyl_avg);
  report.add("sensitivity_ratio", cyl_avg / slab_avg);
  report.add("map_csv", prefix + "_sensitivity.csv");
  report.emit(out, dir / (prefix + "_report.txt"));
}

void cmd_reproduce(const RunConfig& config, const std::string& figure, const fs::path& dir,
                   std::ostream& out) {
  const fs::path sub = dir / figure;
  fs::create_directories(sub);
  if (figure == "fig1") {
    cmd_odmr(config, sub, out, "odmr_aligned");
    RunConfig rotated = config;
    rotated.crystal.sample_rotation_deg = config.crystal.sample_rotation_deg + 90.0;
    cmd_odmr(rotated, sub, out, "odmr_rotated");
    const double observed = 14402.0;
    Report report("misalignment");
    report.add("observed_upper_mhz", observed);
    report.add("angle_deg", spin::angle_from_transition(config.nv, config.field.magnitude_mt, observed,
                                                        spin::Branch::Upper));
    report.emit(out, sub / "misalignment.txt");
  } else if (figure == "fig2") {
    RunConfig c = config;
    c.dnp_sweep.branch = spin::Branch::Lower;
    cmd_dnp_sweep(c, sub, out, "dnp_sweep_lower");
    c.dnp_sweep.branch = spin::Branch::Upper;
    cmd_dnp_sweep(c, sub, out, "dnp_sweep_upper");
    cmd_calibrate(config.calibration, sub, out);
  } else if (figure == "fig3") {
    RunConfig c = config;
    c.buildup.model = BuildupModel::TwoCompartment;
    cmd_buildup(c, sub, out, "buildup_two_compartment");
    c.buildup.model = BuildupModel::Radial;
    cmd_buildup(c, sub, out, "buildup_radial");
  } else if (figure == "figS2") {
    cmd_coil_map(config, sub, out);
    write_xz_section(config, sub / "coil_xz_section.csv");
  } else {
    throw InvalidArgument("unknown figure '" + figure + "' (expected fig1, fig2, fig3 or figS2)");
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation and analysis of optically pumped NV-diamond 13C hyperpolarization"};
  app.name("nvdnp");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::string output_flag;
  app.add_option("-c,--config", config_path, "YAML run configuration");
  app.add_option("--set", sets, "Override a config key, section.key=value (repeatable)");
  app.add_option("-o,--output-dir", output_flag,
                 "Output directory (default: $NVDNP_OUTPUT_DIR, then output_dir in the config)");

  auto* odmr = app.add_subcommand("odmr", "ODMR spectrum and transition table");
  auto* sweep = app.add_subcommand("dnp-sweep", "Steady-state 13C polarization vs microwave frequency");
  auto* buildup = app.add_subcommand("buildup", "13C polarization buildup and exponential fit");
  auto* synth = app.add_subcommand("nmr-synth", "Write a synthetic FID (t_s, re, im) from the nmr section");
  auto* process = app.add_subcommand("nmr-process", "Apodize, transform, phase and fit an FID CSV");
  std::string fid_path;
  process->add_option("fid", fid_path, "FID CSV with columns t_s, re, im")->required();
  auto* calibrate = app.add_subcommand("calibrate", "Enhancement and absolute polarization");
  std::string inputs_path;
  calibrate->add_option("inputs", inputs_path,
                        "Calibration inputs file (default: calibration section of the config)");
  auto* coil_map = app.add_subcommand("coil-map", "Coil sensitivity map and sample averages");
  auto* reproduce = app.add_subcommand("reproduce", "Regenerate the data behind a figure");
  std::string figure;
  reproduce->add_option("figure", figure, "fig1, fig2, fig3 or figS2")
      ->required()
      ->check(CLI::IsMember({"fig1", "fig2", "fig3", "figS2"}));

  std::vector<std::string> argv_store{"nvdnp"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    std::vector<Override> overrides;
    for (const auto& s : sets) overrides.push_back(parse_override(s));
    const RunConfig config =
        config_path.empty() ? load_config("", overrides, "--set") : load_config_file(config_path, overrides);

    fs::path dir = config.output_dir;
    if (const char* env = std::getenv("NVDNP_OUTPUT_DIR"); env && *env) dir = env;
    if (!output_flag.empty()) dir = output_flag;
    fs::create_directories(dir);

    if (odmr->parsed()) cmd_odmr(config, dir, out);
    else if (sweep->parsed()) cmd_dnp_sweep(config, dir, out);
    else if (buildup->parsed()) cmd_buildup(config, dir, out);
    else if (synth->parsed()) cmd_nmr_synth(config, dir, out);
    else if (process->parsed()) cmd_nmr_process(config, fid_path, dir, out);
    else if (calibrate->parsed()) {
      cmd_calibrate(inputs_path.empty() ? config.calibration : load_calibration_inputs_file(inputs_path),
                    dir, out);
    } else if (coil_map->parsed()) cmd_coil_map(config, dir, out);
    else if (reproduce->parsed()) cmd_reproduce(config, figure, dir, out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "nvdnp: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "nvdnp: invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PhysicalImpossibility& e) {
    err << "nvdnp: physically impossible result: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalFailure& e) {
    err << "nvdnp: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "nvdnp: filesystem error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "nvdnp: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace nvdnp::app
