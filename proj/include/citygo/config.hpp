#pragma once

// Pipeline configuration: one struct with every tunable, addressable by
// dotted key names from a key = value file and command-line overrides.

#include "citygo/bpcc.hpp"
#include "citygo/optimize.hpp"
#include "citygo/render.hpp"
#include "citygo/texture.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace citygo {

struct PipelineConfig {
  bpcc::BpccConfig bpcc;
  AtlasParams atlas{10.0, 256, 1024};
  RigParams rig;
  RenderSettings render;
  OptimConfig optim;
  int kernel_size = 3;
  double kernel_sigma = 0.8;

  double residual_threshold = 0.2;
  double surround_fraction = 0.1;

  int blocks = 1;
  double block_overlap = 0.2;

  /// initial Gaussian fit: one Gaussian per point
  int init_iterations = 1500;
  double init_opacity = 0.5;
  double init_scale_factor = 0.5;  // times the mean distance to the nearest neighbours
  int init_neighbors = 3;

  int holdout_every = 8;  // views i with i % holdout_every == holdout_every - 1 are held out
  bool baseline = true;   // also train a Gaussians-only baseline
  std::uint64_t seed = 0;

  /// Rebuilds derived fields (kernel, optimizer seed) and validates.
  void finalize();
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every settable key with a one-line description.
std::vector<ConfigKey> config_keys();

/// Sets one key from text; throws on unknown keys or unparsable values.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
/// "key=value".
void apply_override(PipelineConfig& cfg, const std::string& assignment);
/// Lines of "key = value"; '#' starts a comment. Errors carry the line number.
void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path);
std::string get_config_value(const PipelineConfig& cfg, const std::string& key);
/// All keys in file syntax, loadable by load_config_file.
std::string dump_config(const PipelineConfig& cfg);

}  // namespace citygo
