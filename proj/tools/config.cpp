#include "config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#include <yaml-cpp/yaml.h>

#include "nvdnp/errors.hpp"

namespace nvdnp::app {

namespace {

std::string location(const std::string& source, const YAML::Mark& mark) {
  if (mark.line < 0) return source;
  return source + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

class Section {
 public:
  Section(YAML::Node node, std::string name, const std::string& source)
      : node_(std::move(node)), name_(std::move(name)), source_(source) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      fail(node_, "section must be a mapping");
    }
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& message) const {
    const YAML::Mark mark = at.IsDefined()      ? at.Mark()
                            : node_.IsDefined() ? node_.Mark()
                                                : YAML::Mark::null_mark();
    throw ConfigError(location(source_, mark) + ": [" + name_ + "] " + message);
  }

  [[noreturn]] void fail(const std::string& message) const { fail(node_, message); }

  bool present() const { return node_ && node_.IsMap(); }

  bool has(const std::string& key) const {
    if (!present()) return false;
    const YAML::Node& map = node_;
    return map[key].IsDefined();
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    if (!present()) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& map = node_;
    return map[key];
  }

  template <typename T>
  bool read(const std::string& key, T& out) {
    const YAML::Node v = raw(key);
    if (!v) return false;
    convert(v, key, out);
    return true;
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!read(key, out)) fail("missing required field '" + key + "'");
  }

  Section child(const std::string& key) {
    const std::string name = name_.empty() ? key : name_ + "." + key;
    return Section(raw(key), name, source_);
  }

  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  const YAML::Node& node() const { return node_; }

 private:
  void convert(const YAML::Node& v, const std::string& key, double& out) {
    scalar(v, key, out, "a number");
  }
  void convert(const YAML::Node& v, const std::string& key, bool& out) {
    scalar(v, key, out, "true or false");
  }
  void convert(const YAML::Node& v, const std::string& key, std::string& out) {
    scalar(v, key, out, "a string");
  }
  void convert(const YAML::Node& v, const std::string& key, int& out) {
    scalar(v, key, out, "an integer");
  }
  void convert(const YAML::Node& v, const std::string& key, std::uint64_t& out) {
    long long tmp = 0;
    scalar(v, key, tmp, "a non-negative integer");
    if (tmp < 0) fail(v, "'" + key + "' must be a non-negative integer");
    out = static_cast<std::uint64_t>(tmp);
  }
  static_assert(std::is_same_v<std::size_t, std::uint64_t>);
  void convert(const YAML::Node& v, const std::string& key, Eigen::Vector3d& out) {
    if (!v.IsSequence() || v.size() != 3) fail(v, "'" + key + "' must be a list of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) scalar(v[i], key, out[i], "a number");
  }
  void convert(const YAML::Node& v, const std::string& key, coil::Axis& out) {
    if (!v.IsSequence() || v.size() != 3) fail(v, "'" + key + "' must be [min, max, points]");
    scalar(v[0], key, out.min, "a number");
    scalar(v[1], key, out.max, "a number");
    long long n = 0;
    scalar(v[2], key, n, "an integer");
    if (n < 2) fail(v, "'" + key + "' needs at least 2 points");
    out.points = static_cast<std::size_t>(n);
  }
  void convert(const YAML::Node& v, const std::string& key, spin::Branch& out) {
    std::string s;
    scalar(v, key, s, "a string");
    if (s == "lower") out = spin::Branch::Lower;
    else if (s == "upper") out = spin::Branch::Upper;
    else fail(v, "'" + key + "' must be 'lower' or 'upper'");
  }
  void convert(const YAML::Node& v, const std::string& key, BuildupModel& out) {
    std::string s;
    scalar(v, key, s, "a string");
    if (s == "two_compartment") out = BuildupModel::TwoCompartment;
    else if (s == "radial") out = BuildupModel::Radial;
    else fail(v, "'" + key + "' must be 'two_compartment' or 'radial'");
  }
  void convert(const YAML::Node& v, const std::string& key, nmr::LineShape& out) {
    std::string s;
    scalar(v, key, s, "a string");
    if (s == "sampled") out = nmr::LineShape::SampledLorentzian;
    else if (s == "lorentzian") out = nmr::LineShape::Lorentzian;
    else fail(v, "'" + key + "' must be 'sampled' or 'lorentzian'");
  }
  void convert(const YAML::Node& v, const std::string& key, coil::TurnLayout& out) {
    std::string s;
    scalar(v, key, s, "a string");
    if (s == "concentric") out = coil::TurnLayout::Concentric;
    else if (s == "archimedean") out = coil::TurnLayout::Archimedean;
    else fail(v, "'" + key + "' must be 'concentric' or 'archimedean'");
  }

  template <typename T>
  void scalar(const YAML::Node& v, const std::string& key, T& out, const char* expected) {
    if (!v.IsScalar()) fail(v, "'" + key + "' must be " + expected);
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "'" + key + "' must be " + expected + ", got '" + v.Scalar() + "'");
    }
  }

  YAML::Node node_;
  std::string name_;
  const std::string& source_;
  std::set<std::string> seen_;
};

// Re-raise module validation errors against the section that produced them.
template <typename Fn>
void check(const Section& section, Fn&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    section.fail(e.what());
  }
}

SampleConfig parse_sample(Section s) {
  SampleConfig out;
  s.require("kind", out.kind);
  using calibration::SampleSpec;
  if (out.kind == "diamond") {
    double mass = 0.0, abundance = 0.011;
    s.require("mass_mg", mass);
    s.read("abundance_13c", abundance);
    check(s, [&] { out.spec = SampleSpec::diamond(mass, abundance); });
  } else if (out.kind == "dmso" || out.kind == "acetonitrile") {
    const bool dmso = out.kind == "dmso";
    double volume = 0.0, density = dmso ? 1.10 : 0.786, abundance = 0.99;
    s.require("volume_ul", volume);
    s.read("density_g_per_ml", density);
    s.read("abundance_13c", abundance);
    check(s, [&] {
      out.spec = dmso ? SampleSpec::dmso(volume, density, abundance)
                      : SampleSpec::acetonitrile(volume, density, abundance);
    });
  } else if (out.kind == "liquid") {
    out.spec.kind = calibration::SampleKind::Liquid;
    s.require("volume_ul", out.spec.volume_ul);
    s.require("density_g_per_ml", out.spec.density_g_per_ml);
    s.require("molar_mass_g_per_mol", out.spec.molar_mass_g_per_mol);
    s.require("carbons_per_molecule", out.spec.carbons_per_molecule);
    s.require("abundance_13c", out.spec.abundance_13c);
  } else {
    s.fail("'kind' must be diamond, dmso, acetonitrile or liquid");
  }
  s.finish();
  check(s, [&] { out.spec.validate(); });
  return out;
}

CalibrationConfig default_calibration() {
  CalibrationConfig c;
  c.inputs.amp_sample = 12.0;
  c.inputs.amp_reference = 1.0;
  c.inputs.scans_sample = 60.0;
  c.inputs.scans_reference = 12676.0;
  c.inputs.sensitivity_ratio = 0.99;
  c.sample = SampleConfig{"diamond", calibration::SampleSpec::diamond(4.5)};
  c.reference = SampleConfig{"dmso", calibration::SampleSpec::dmso(10.0)};
  c.field_mt = 420.0;
  c.temperature_k = 295.0;
  return c;
}

// `strict` requires every input to be given explicitly.
CalibrationConfig parse_calibration(Section s, bool strict) {
  CalibrationConfig c = strict ? CalibrationConfig{} : default_calibration();
  auto& in = c.inputs;
  auto field = [&](const char* key, double& out) {
    if (strict) s.require(key, out);
    else s.read(key, out);
  };
  field("amp_sample", in.amp_sample);
  field("amp_reference", in.amp_reference);
  field("scans_sample", in.scans_sample);
  field("scans_reference", in.scans_reference);
  s.read("sensitivity_ratio", in.sensitivity_ratio);

  const bool counts = s.has("n13c_sample") || s.has("n13c_reference");
  const bool specs = s.has("sample") || s.has("reference");
  if (counts && specs) s.fail("give either n13c_sample/n13c_reference or sample/reference, not both");
  if (counts || (strict && !specs)) {
    s.require("n13c_sample", in.n13c_sample);
    s.require("n13c_reference", in.n13c_reference);
    c.sample.reset();
    c.reference.reset();
  } else if (specs) {
    if (!s.has("sample")) s.fail("missing required field 'sample'");
    if (!s.has("reference")) s.fail("missing required field 'reference'");
    c.sample = parse_sample(s.child("sample"));
    c.reference = parse_sample(s.child("reference"));
  }

  const bool explicit_thermal = s.has("reference_thermal_polarization");
  const bool computed = s.has("field_mt") || s.has("temperature_k");
  if (explicit_thermal && computed) {
    s.fail("give either reference_thermal_polarization or field_mt/temperature_k, not both");
  }
  if (explicit_thermal || (strict && !computed)) {
    s.require("reference_thermal_polarization", in.reference_thermal_polarization);
    c.field_mt.reset();
    c.temperature_k.reset();
  } else if (computed) {
    double b = 0.0, t = 0.0;
    s.require("field_mt", b);
    s.require("temperature_k", t);
    c.field_mt = b;
    c.temperature_k = t;
  }
  s.read("gyromag_mhz_per_mt", c.gyromag_mhz_per_mt);
  s.finish();
  check(s, [&] { resolve(c).validate(); });
  return c;
}

YAML::Node parse_document(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(location(source, e.mark) + ": " + e.msg);
  }
  if (root.IsNull()) return YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError(location(source, root.Mark()) + ": top level must be a mapping");
  return root;
}

void apply_override(YAML::Node& root, const Override& o) {
  std::vector<std::string> parts;
  std::stringstream ss(o.path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("--set " + o.path + ": empty path component");
    parts.push_back(part);
  }
  YAML::Node value;
  try {
    value = YAML::Load(o.value);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("--set " + o.path + ": cannot parse value '" + o.value + "'");
  }
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next || next.IsNull()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError("--set " + o.path + ": '" + parts[i] + "' is not a section");
    cur.reset(next);
  }
  cur[parts.back()] = value;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

coil::PulseCalibration CoilConfig::calibration() const {
  coil::PulseCalibration c;
  c.geometry = geometry;
  c.b0_dir = coil::static_field_direction(b0_angle_deg);
  c.calibration_point_mm = calibration_point_mm;
  c.uniform_field = uniform_field;
  return c;
}

coil::Slab CoilConfig::slab() const {
  coil::Slab s;
  s.size_mm = slab_size_mm;
  s.center_mm = sample_center_mm.value_or(coil::default_sample_center(geometry, s));
  return s;
}

coil::Cylinder CoilConfig::cylinder() const {
  coil::Cylinder c;
  c.diameter_mm = cylinder_diameter_mm;
  c.height_mm = cylinder_height_mm;
  c.center_mm = slab().center_mm;
  return c;
}

double RunConfig::nv_polarization() const {
  return optical.transverse_average
             ? optical::face_averaged_polarization(optical.params, optical.face_half_width_mm)
             : optical::depth_averaged_polarization(optical.params);
}

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects section.key=value, got '" + text + "'");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

calibration::CalibrationInputs resolve(const CalibrationConfig& config) {
  calibration::CalibrationInputs in = config.inputs;
  if (config.sample && config.reference) {
    in.n13c_sample = calibration::count_13c(config.sample->spec);
    in.n13c_reference = calibration::count_13c(config.reference->spec);
  }
  if (config.field_mt && config.temperature_k) {
    in.reference_thermal_polarization = calibration::thermal_polarization(
        config.gyromag_mhz_per_mt, *config.field_mt, *config.temperature_k);
  }
  return in;
}

RunConfig load_config(const std::string& text, const std::vector<Override>& overrides,
                      const std::string& source) {
  YAML::Node root = parse_document(text, source);
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c;
  Section top(root, "", source);
  top.read("seed", c.seed);
  top.read("output_dir", c.output_dir);

  {
    Section s = top.child("nv");
    s.read("zero_field_splitting_mhz", c.nv.zero_field_splitting_mhz);
    s.read("electron_gyromag_mhz_per_mt", c.nv.electron_gyromag_mhz_per_mt);
    s.read("nuclear_gyromag_mhz_per_mt", c.nv.nuclear_gyromag_mhz_per_mt);
    s.read("allow_d_override", c.allow_d_override);
    s.finish();
    check(s, [&] { c.nv.validate(c.allow_d_override); });
  }
  {
    Section s = top.child("field");
    s.read("magnitude_mt", c.field.magnitude_mt);
    s.read("polar_deg", c.field.polar_deg);
    s.read("azimuth_deg", c.field.azimuth_deg);
    s.finish();
    check(s, [&] { c.field.validate(); });
  }
  {
    Section s = top.child("crystal");
    s.read("aligned_axis", c.crystal.aligned_axis);
    s.read("sample_rotation_deg", c.crystal.sample_rotation_deg);
    s.finish();
    check(s, [&] { spin::crystal_axes(c.crystal.aligned_axis, c.crystal.sample_rotation_deg); });
  }
  {
    Section s = top.child("odmr");
    s.read("start_mhz", c.odmr.grid.start_mhz);
    s.read("stop_mhz", c.odmr.grid.stop_mhz);
    s.read("points", c.odmr.grid.points);
    s.read("linewidth_mhz", c.odmr.linewidth_mhz);
    s.read("contrast", c.odmr.contrast);
    s.finish();
    check(s, [&] {
      const double t[] = {c.odmr.grid.start_mhz};
      spin::synthesize_odmr(t, c.odmr.linewidth_mhz, c.odmr.contrast, c.odmr.grid);
    });
  }
  {
    Section s = top.child("optical");
    auto& p = c.optical.params;
    s.read("surface_intensity_w_cm2", p.surface_intensity_w_cm2);
    s.read("absorption_per_mm", p.absorption_per_mm);
    s.read("thickness_mm", p.thickness_mm);
    s.read("beam_waist_mm", p.beam_waist_mm);
    s.read("saturation_intensity_w_cm2", p.saturation_intensity_w_cm2);
    s.read("max_nv_polarization", p.max_nv_polarization);
    s.read("transverse_average", c.optical.transverse_average);
    s.read("face_half_width_mm", c.optical.face_half_width_mm);
    s.finish();
    check(s, [&] {
      p.validate();
      if (!(c.optical.face_half_width_mm > 0.0)) {
        throw InvalidArgument("face_half_width_mm must be positive");
      }
    });
  }
  {
    Section s = top.child("dnp");
    auto& p = c.dnp;
    s.read("transfer_rate_per_s", p.transfer_rate_per_s);
    s.read("nuclear_larmor_mhz", p.nuclear_larmor_mhz);
    s.read("esr_linewidth_mhz", p.esr_linewidth_mhz);
    s.read("diffusion_nm2_per_s", p.diffusion_nm2_per_s);
    if (s.has("nuclear_t1_s")) {
      const YAML::Node v = s.raw("nuclear_t1_s");
      if (v.IsScalar() && (v.Scalar() == "inf" || v.Scalar() == ".inf")) {
        p.nuclear_t1_s = std::numeric_limits<double>::infinity();
      } else {
        s.read("nuclear_t1_s", p.nuclear_t1_s);
      }
    }
    s.read("proximal_fraction", p.proximal_fraction);
    s.read("nv_spacing_nm", p.nv_spacing_nm);
    s.read("mw_power_w", p.mw_power_w);
    s.read("mw_sat_power_w", p.mw_sat_power_w);
    s.finish();
    check(s, [&] { p.validate(); });
  }
  {
    Section s = top.child("dnp_sweep");
    s.read("branch", c.dnp_sweep.branch);
    s.read("start_offset_mhz", c.dnp_sweep.start_offset_mhz);
    s.read("stop_offset_mhz", c.dnp_sweep.stop_offset_mhz);
    s.read("points", c.dnp_sweep.points);
    s.finish();
    check(s, [&] {
      if (c.dnp_sweep.points < 1) throw InvalidArgument("points must be at least 1");
      if (c.dnp_sweep.stop_offset_mhz < c.dnp_sweep.start_offset_mhz) {
        throw InvalidArgument("stop_offset_mhz must not be below start_offset_mhz");
      }
    });
  }
  {
    Section s = top.child("buildup");
    s.read("branch", c.buildup.branch);
    s.read("drive_offset_mhz", c.buildup.drive_offset_mhz);
    s.read("t_max_s", c.buildup.t_max_s);
    s.read("points", c.buildup.points);
    s.read("model", c.buildup.model);
    s.read("cells", c.buildup.cells);
    s.finish();
    check(s, [&] {
      if (!(c.buildup.t_max_s >= 0.0) || !std::isfinite(c.buildup.t_max_s)) {
        throw InvalidArgument("t_max_s must be finite and non-negative");
      }
      if (c.buildup.points < 1) throw InvalidArgument("points must be at least 1");
      if (c.buildup.cells < 32) throw InvalidArgument("cells must be at least 32");
    });
  }
  {
    Section s = top.child("nmr");
    auto& f = c.nmr.fid;
    s.read("polarization", f.polarization);
    s.read("signal_scale", f.signal_scale);
    s.read("freq_offset_hz", f.freq_offset_hz);
    s.read("phase_rad", f.phase_rad);
    s.read("t2_star_s", f.t2_star_s);
    s.read("noise_sigma", f.noise_sigma);
    s.read("points", f.points);
    s.read("dwell_s", f.dwell_s);
    s.read("apodization_s", c.nmr.processing.apodization_s);
    s.read("window_half_width_hz", c.nmr.processing.window_half_width_hz);
    s.read("line_shape", c.nmr.processing.shape);
    s.finish();
    check(s, [&] {
      if (!(f.t2_star_s > 0.0)) throw InvalidArgument("t2_star_s must be positive");
      if (f.points < 16) throw InvalidArgument("points must be at least 16");
      if (!(f.dwell_s > 0.0)) throw InvalidArgument("dwell_s must be positive");
      if (!(f.noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
    });
  }
  {
    Section s = top.child("coil");
    auto& k = c.coil;
    s.read("turns", k.geometry.turns);
    s.read("inner_radius_mm", k.geometry.inner_radius_mm);
    s.read("outer_radius_mm", k.geometry.outer_radius_mm);
    s.read("layout", k.geometry.layout);
    s.read("segments_per_turn", k.geometry.segments_per_turn);
    s.read("plane_offset_mm", k.geometry.plane_offset_mm);
    s.read("b0_angle_deg", k.b0_angle_deg);
    s.read("calibration_point_mm", k.calibration_point_mm);
    s.read("uniform_field", k.uniform_field);
    {
      Section g = s.child("grid");
      g.read("x", k.grid.x);
      g.read("y", k.grid.y);
      g.read("z", k.grid.z);
      g.finish();
      check(g, [&] {
        for (const coil::Axis* a : {&k.grid.x, &k.grid.y, &k.grid.z}) {
          if (!(a->max > a->min)) throw InvalidArgument("grid axes need max > min");
        }
      });
    }
    s.read("slab_size_mm", k.slab_size_mm);
    s.read("cylinder_diameter_mm", k.cylinder_diameter_mm);
    s.read("cylinder_height_mm", k.cylinder_height_mm);
    Eigen::Vector3d center;
    if (s.read("sample_center_mm", center)) k.sample_center_mm = center;
    s.read("quadrature_points", k.quadrature_points);
    s.finish();
    check(s, [&] {
      k.geometry.validate();
      if (!(k.slab_size_mm.minCoeff() > 0.0) || !(k.cylinder_diameter_mm > 0.0) ||
          !(k.cylinder_height_mm > 0.0)) {
        throw InvalidArgument("sample dimensions must be positive");
      }
      if (k.quadrature_points < 1) throw InvalidArgument("quadrature_points must be positive");
    });
  }
  if (top.has("calibration")) {
    c.calibration = parse_calibration(top.child("calibration"), false);
  } else {
    top.raw("calibration");
    c.calibration = default_calibration();
  }
  top.finish();
  return c;
}

RunConfig load_config_file(const std::string& path, const std::vector<Override>& overrides) {
  return load_config(read_text(path), overrides, path);
}

CalibrationConfig load_calibration_inputs(const std::string& text, const std::string& source) {
  YAML::Node root = parse_document(text, source);
  return parse_calibration(Section(root, "inputs", source), true);
}

CalibrationConfig load_calibration_inputs_file(const std::string& path) {
  return load_calibration_inputs(read_text(path), path);
}

}  // namespace nvdnp::app
