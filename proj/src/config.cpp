#include "gsicp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gsicp/errors.hpp"

namespace gsicp {

using nlohmann::json;

DatasetFormat parseDatasetFormat(const std::string& s) {
  if (s == "synth") return DatasetFormat::Synth;
  if (s == "tum") return DatasetFormat::Tum;
  if (s == "replica") return DatasetFormat::Replica;
  throw InputError("unknown dataset format '" + s + "' (expected tum, replica or synth)");
}

std::string toString(DatasetFormat f) {
  switch (f) {
    case DatasetFormat::Synth:
      return "synth";
    case DatasetFormat::Tum:
      return "tum";
    case DatasetFormat::Replica:
      return "replica";
  }
  return "?";
}

RunMode parseRunMode(const std::string& s) {
  if (s == "det" || s == "deterministic") return RunMode::Deterministic;
  if (s == "free" || s == "free_running") return RunMode::FreeRunning;
  throw InputError("unknown mode '" + s + "' (expected det or free)");
}

std::string toString(RunMode m) { return m == RunMode::Deterministic ? "det" : "free"; }

namespace {

std::string toString(TrainingChoice c) { return c == TrainingChoice::Random ? "random" : "recent"; }

SynthPath parseSynthPath(const std::string& s) {
  if (s == "orbit") return SynthPath::Orbit;
  if (s == "line") return SynthPath::Line;
  throw InputError("unknown synth path '" + s + "'");
}
std::string toString(SynthPath p) { return p == SynthPath::Orbit ? "orbit" : "line"; }

// One description of the schema drives both parsing and dumping.

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError("config: bad value for '" + join(key) + "'");
    }
  }

  void field(const char* key, Vec3& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) {
      throw InputError("config: '" + join(key) + "' must be an array of 3 numbers");
    }
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw InputError("config: '" + join(key) + "' must hold numbers");
      out[i] = v[i].get<double>();
    }
  }

  void field(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    field(key, s);
    out = s;
  }

  template <typename E, typename Parse, typename Show>
  void enumeration(const char* key, E& out, Parse parse, Show) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw InputError("config: '" + join(key) + "' must be a string");
    try {
      out = parse(j_.at(key).get<std::string>());
    } catch (const InputError& e) {
      throw InputError("config: '" + join(key) + "': " + e.what());
    }
  }

  template <typename Fn>
  void section(const char* key, Fn fn) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), join(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) throw InputError("config: unknown key '" + join(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <typename T>
  void field(const char* key, T& v) {
    j_[key] = v;
  }
  void field(const char* key, Vec3& v) { j_[key] = {v.x(), v.y(), v.z()}; }
  void field(const char* key, std::filesystem::path& v) { j_[key] = v.string(); }

  template <typename E, typename Parse, typename Show>
  void enumeration(const char* key, E& v, Parse, Show show) {
    j_[key] = show(v);
  }

  template <typename Fn>
  void section(const char* key, Fn fn) {
    json sub;
    Writer w(sub);
    fn(w);
    j_[key] = sub;
  }

 private:
  json& j_;
};

template <typename V>
void intrinsicsFields(V& v, Intrinsics& k) {
  v.field("fx", k.fx);
  v.field("fy", k.fy);
  v.field("cx", k.cx);
  v.field("cy", k.cy);
  v.field("width", k.width);
  v.field("height", k.height);
}

template <typename V>
void schema(V& v, SlamConfig& c) {
  auto fmt_parse = [](const std::string& s) { return parseDatasetFormat(s); };
  auto fmt_show = [](DatasetFormat f) { return toString(f); };
  v.section("dataset", [&](V& d) {
    d.field("path", c.dataset.path);
    d.enumeration("format", c.dataset.format, fmt_parse, fmt_show);
    d.field("max_frames", c.dataset.max_frames);
    d.section("tum", [&](V& t) {
      t.section("intrinsics", [&](V& k) { intrinsicsFields(k, c.dataset.tum.intrinsics); });
      t.field("depth_scale", c.dataset.tum.depth_scale);
      t.field("max_dt", c.dataset.tum.max_dt);
    });
    d.section("replica", [&](V& r) {
      r.section("intrinsics", [&](V& k) { intrinsicsFields(k, c.dataset.replica.intrinsics); });
      r.field("depth_scale", c.dataset.replica.depth_scale);
    });
    d.section("synth", [&](V& s) {
      SynthSpec& sp = c.dataset.synth;
      s.field("texture_seed", sp.texture_seed);
      s.section("intrinsics", [&](V& k) { intrinsicsFields(k, sp.intrinsics); });
      s.enumeration(
          "path", sp.path, [](const std::string& x) { return parseSynthPath(x); },
          [](SynthPath p) { return toString(p); });
      s.field("frames", sp.frames);
      s.field("orbit_radius", sp.orbit_radius);
      s.field("orbit_height", sp.orbit_height);
      s.field("orbit_arc", sp.orbit_arc);
      s.field("orbit_start", sp.orbit_start);
      s.field("look_at", sp.look_at);
      s.field("line_start", sp.line_start);
      s.field("line_end", sp.line_end);
      s.field("line_look", sp.line_look);
      s.field("depth_noise", sp.depth_noise);
      s.field("color_noise", sp.color_noise);
      s.field("noise_seed", sp.noise_seed);
    });
  });
  v.section("cloud", [&](V& s) {
    s.field("stride", c.cloud.stride);
    s.field("z_min", c.cloud.z_min);
    s.field("z_max", c.cloud.z_max);
    s.field("voxel_size", c.cloud.voxel_size);
    s.field("knn", c.cloud.knn);
    s.field("eigen_floor", c.cloud.eigen_floor);
  });
  v.section("gicp", [&](V& s) {
    GicpConfig& g = c.tracking.gicp;
    s.enumeration(
        "mode", g.mode, [](const std::string& x) { return parseRegularization(x); },
        [](Regularization r) { return toString(r); });
    s.field("plane_eps", g.plane_eps);
    s.field("max_corr_dist", g.max_corr_dist);
    s.field("min_pairs", g.min_pairs);
    s.field("max_iterations", g.max_iterations);
    s.field("convergence_eps", g.convergence_eps);
    s.field("max_halvings", g.max_halvings);
  });
  v.section("tracking", [&](V& s) {
    TrackingConfig& t = c.tracking;
    s.field("corr_dist_threshold", t.corr_dist_threshold);
    s.field("kf_ratio_threshold", t.kf_ratio_threshold);
    s.field("forced_kf_interval", t.forced_kf_interval);
    s.field("mapping_only_interval", t.mapping_only_interval);
    s.field("promote_mapping_only", t.promote_mapping_only);
    s.field("max_lost_frames", c.max_lost_frames);
    s.field("origin_from_ground_truth", c.origin_from_ground_truth);
  });
  v.section("map", [&](V& s) {
    InsertConfig& m = c.insert;
    s.field("init_opacity", m.init_opacity);
    s.field("overlap_dist", c.overlap_dist);
    s.field("scale_exponent", m.scale_exponent);
    s.field("scale_base", m.scale_base);
    s.enumeration(
        "scale_init", m.scale_init, [](const std::string& x) { return parseScaleInit(x); },
        [](ScaleInit x) { return toString(x); });
    s.field("min_scale", m.min_scale);
    s.field("max_scale", m.max_scale);
    s.field("max_anisotropy", m.max_anisotropy);
    s.field("scene_extent", c.scene_extent);
  });
  v.section("prune", [&](V& s) {
    MappingConfig& m = c.mapping;
    s.field("enabled", m.prune_enabled);
    s.field("min_opacity", m.prune.min_opacity);
    s.field("max_anisotropy", m.prune.max_anisotropy);
    s.enumeration(
        "anisotropy", m.prune.anisotropy, [](const std::string& x) { return parseAnisotropy(x); },
        [](Anisotropy x) { return toString(x); });
    s.field("scale_fraction", c.prune_scale_fraction);
    s.field("every", m.prune_every);
    s.field("warmup", m.prune_warmup);
  });
  v.section("mapping", [&](V& s) {
    MappingConfig& m = c.mapping;
    s.field("enabled", c.mapping_enabled);
    s.field("iters_per_frame", c.iters_per_frame);
    s.field("final_iters", c.final_iters);
    s.enumeration(
        "training", m.training, [](const std::string& x) { return parseTrainingChoice(x); },
        [](TrainingChoice x) { return toString(x); });
    s.section("weights", [&](V& w) {
      w.field("l1", m.weights.l1);
      w.field("dssim", m.weights.dssim);
      w.field("depth", m.weights.depth);
    });
    s.section("lr", [&](V& w) {
      w.field("means", m.lr.means);
      w.field("rotations", m.lr.rotations);
      w.field("log_scales", m.lr.log_scales);
      w.field("colors", m.lr.colors);
      w.field("opacity_logits", m.lr.opacity_logits);
    });
    s.section("adam", [&](V& w) {
      w.field("beta1", m.adam.beta1);
      w.field("beta2", m.adam.beta2);
      w.field("eps", m.adam.eps);
    });
  });
  v.section("render", [&](V& s) {
    RenderConfig& r = c.mapping.render;
    s.field("downsample", c.render_downsample);
    s.field("near_plane", r.near_plane);
    s.field("far_plane", r.far_plane);
    s.field("lowpass", r.lowpass);
    s.field("alpha_max", r.alpha_max);
    s.field("transmittance_stop", r.transmittance_stop);
    s.field("alpha_min", r.alpha_min);
    s.field("jacobian_fov_margin", r.jacobian_fov_margin);
  });
  v.section("eval", [&](V& s) {
    s.field("heldout_every", c.eval.heldout_every);
    s.field("heldout_offset", c.eval.heldout_offset);
    s.field("align", c.eval.align);
    s.field("max_dt", c.eval.max_dt);
  });
  v.enumeration(
      "mode", c.mode, [](const std::string& x) { return parseRunMode(x); },
      [](RunMode m) { return toString(m); });
  v.field("fps_cap", c.fps_cap);
  v.field("seed", c.seed);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError("config: " + what);
}

}  // namespace

void SlamConfig::validate() const {
  require(insert.scale_exponent > 0.0, "map.scale_exponent must be > 0");
  require(insert.scale_base > 0.0, "map.scale_base must be > 0");
  require(insert.init_opacity > 0.0 && insert.init_opacity < 1.0,
          "map.init_opacity must lie in (0, 1)");
  require(insert.min_scale > 0.0 && insert.max_scale > insert.min_scale,
          "map.min_scale/max_scale must satisfy 0 < min < max");
  require(cloud.stride >= 1, "cloud.stride must be >= 1");
  require(cloud.knn >= 4, "cloud.knn must be >= 4");
  require(cloud.z_min >= 0.0 && cloud.z_max > cloud.z_min, "cloud.z_min/z_max invalid");
  require(cloud.eigen_floor > 0.0, "cloud.eigen_floor must be > 0");
  require(tracking.gicp.max_corr_dist > 0.0, "gicp.max_corr_dist must be > 0");
  require(tracking.gicp.min_pairs >= 1, "gicp.min_pairs must be >= 1");
  require(tracking.gicp.max_iterations >= 1, "gicp.max_iterations must be >= 1");
  require(tracking.gicp.plane_eps > 0.0, "gicp.plane_eps must be > 0");
  require(tracking.kf_ratio_threshold >= 0.0 && tracking.kf_ratio_threshold <= 1.0,
          "tracking.kf_ratio_threshold must lie in [0, 1]");
  require(max_lost_frames >= 0, "tracking.max_lost_frames must be >= 0");
  const LossWeights& w = mapping.weights;
  require(w.l1 >= 0.0 && w.dssim >= 0.0 && w.depth >= 0.0, "mapping.weights must be >= 0");
  require(w.l1 + w.dssim + w.depth > 0.0, "mapping.weights must not all be zero");
  require(iters_per_frame >= 0 && final_iters >= 0, "iteration counts must be >= 0");
  require(mapping.prune_every >= 1, "prune.every must be >= 1");
  require(render_downsample >= 1, "render.downsample must be >= 1");
  require(eval.heldout_every >= 1, "eval.heldout_every must be >= 1");
  require(dataset.max_frames >= 0, "dataset.max_frames must be >= 0");
  if (dataset.format == DatasetFormat::Synth) {
    require(dataset.synth.frames >= 1, "dataset.synth.frames must be >= 1");
    require(dataset.synth.intrinsics.valid(), "dataset.synth.intrinsics invalid");
  }
}

SlamConfig parseConfig(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config: JSON parse error: ") + e.what());
  }
  SlamConfig cfg;
  Reader r(j, "");
  schema(r, cfg);
  r.finish();
  cfg.validate();
  return cfg;
}

SlamConfig loadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseConfig(ss.str());
}

std::string configToJson(const SlamConfig& cfg) {
  SlamConfig copy = cfg;
  json j;
  Writer w(j);
  schema(w, copy);
  return j.dump(2);
}

}  // namespace gsicp
