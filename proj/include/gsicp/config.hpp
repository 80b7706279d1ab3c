#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gsicp/cloud.hpp"
#include "gsicp/dataset.hpp"
#include "gsicp/gaussian_map.hpp"
#include "gsicp/mapping.hpp"
#include "gsicp/synth.hpp"
#include "gsicp/tracking.hpp"

namespace gsicp {

enum class DatasetFormat { Synth, Tum, Replica };
DatasetFormat parseDatasetFormat(const std::string& s);
std::string toString(DatasetFormat f);

enum class RunMode { Deterministic, FreeRunning };
RunMode parseRunMode(const std::string& s);
std::string toString(RunMode m);

struct DatasetConfig {
  std::filesystem::path path;
  DatasetFormat format = DatasetFormat::Synth;
  /// Process at most this many frames; 0 means all.
  int max_frames = 0;
  TumOptions tum;
  ReplicaOptions replica;
  SynthSpec synth = SynthSpec::defaultScene();
};

struct EvalConfig {
  /// Held-out views are frames with index % every == offset that are not keyframes.
  int heldout_every = 10;
  int heldout_offset = 5;
  bool align = true;
  double max_dt = 0.02;
};

struct SlamConfig {
  DatasetConfig dataset;
  CloudConfig cloud;
  TrackingConfig tracking;
  /// Consecutive lost frames tolerated before the run aborts.
  int max_lost_frames = 10;
  InsertConfig insert;
  /// Overlap distance for insertion; negative uses the correspondence threshold.
  double overlap_dist = -1.0;
  MappingConfig mapping;
  /// Prune threshold on max scale as a fraction of the scene extent.
  double prune_scale_fraction = 0.1;
  /// Scene extent in metres; <= 0 derives it from the first frame.
  double scene_extent = 0.0;
  int iters_per_frame = 10;
  /// Extra optimisation after the last frame.
  int final_iters = 0;
  bool mapping_enabled = true;
  /// Render, train and evaluate at 1/downsample of the input resolution.
  int render_downsample = 2;
  bool origin_from_ground_truth = false;
  EvalConfig eval;
  RunMode mode = RunMode::Deterministic;
  double fps_cap = 0.0;  // <= 0 disables
  std::uint64_t seed = 0;

  /// Throws InputError describing the first invalid value.
  void validate() const;
};

/// Parses a JSON document. Unknown keys and wrong types are InputErrors
/// naming the dotted key path. Missing keys keep their defaults.
SlamConfig parseConfig(const std::string& json_text);
SlamConfig loadConfig(const std::filesystem::path& path);

/// The effective configuration as JSON (accepted by parseConfig).
std::string configToJson(const SlamConfig& cfg);

}  // namespace gsicp
