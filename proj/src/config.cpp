#include "citygo/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace citygo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw Error("config: " + key + ": cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw Error("config: " + key + ": expected a boolean, got '" + text + "'");
}

std::string format_double(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

struct Entry {
  ConfigKey key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class T, class F>
Entry number(std::string name, std::string help, F field) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [name, field](PipelineConfig& c, const std::string& v) { field(c) = parse_number<T>(name, v); };
  e.get = [field](const PipelineConfig& c) {
    if constexpr (std::is_floating_point_v<T>)
      return format_double(field(c));
    else
      return std::to_string(field(c));
  };
  return e;
}

template <class F>
Entry boolean(std::string name, std::string help, F field) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [name, field](PipelineConfig& c, const std::string& v) { field(c) = parse_bool(name, v); };
  e.get = [field](const PipelineConfig& c) {
    return std::string(field(c) ? "true" : "false");
  };
  return e;
}

#define CITYGO_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(number<double>("bpcc.gamma", "contour area ratio below which a new dominant contour starts", CITYGO_FIELD(bpcc.gamma)));
    t.push_back(number<double>("bpcc.beta", "wall ratio below which a wall segment is filled", CITYGO_FIELD(bpcc.beta)));
    t.push_back(number<int>("bpcc.num_layers", "fixed layer count, 0 = from target layer height", CITYGO_FIELD(bpcc.num_layers)));
    t.push_back(number<double>("bpcc.layer_height", "target layer height in m", CITYGO_FIELD(bpcc.target_layer_height)));
    t.push_back(number<int>("bpcc.min_layers", "minimum layer count", CITYGO_FIELD(bpcc.min_layers)));
    t.push_back(number<double>("bpcc.eps_factor", "DBSCAN radius in point spacings", CITYGO_FIELD(bpcc.eps_factor)));
    t.push_back(number<double>("bpcc.alpha_factor", "alpha-shape radius in point spacings", CITYGO_FIELD(bpcc.alpha_factor)));
    t.push_back(number<int>("bpcc.min_pts", "DBSCAN core point threshold", CITYGO_FIELD(bpcc.min_pts)));
    t.push_back(number<double>("bpcc.simplify", "contour simplification tolerance in m", CITYGO_FIELD(bpcc.simplify_tolerance)));
    t.push_back(number<double>("bpcc.sample_density", "fill density in points/m^2, 0 = input density", CITYGO_FIELD(bpcc.sample_density)));
    t.push_back(number<double>("bpcc.coverage_factor", "fill coverage radius in point spacings", CITYGO_FIELD(bpcc.coverage_factor)));
    {
      Entry e{{"bpcc.ground_z", "terrain height under buildings, 'auto' = lowest surround point"}, {}, {}};
      e.set = [](PipelineConfig& c, const std::string& v) {
        if (v == "auto")
          c.bpcc.ground_z.reset();
        else
          c.bpcc.ground_z = parse_number<double>("bpcc.ground_z", v);
      };
      e.get = [](const PipelineConfig& c) {
        return c.bpcc.ground_z ? format_double(*c.bpcc.ground_z) : std::string("auto");
      };
      t.push_back(e);
    }
    t.push_back(number<double>("atlas.texels_per_meter", "texture density", CITYGO_FIELD(atlas.texels_per_meter)));
    t.push_back(number<int>("atlas.min_resolution", "smallest atlas side", CITYGO_FIELD(atlas.min_resolution)));
    t.push_back(number<int>("atlas.max_resolution", "largest atlas side", CITYGO_FIELD(atlas.max_resolution)));
    t.push_back(number<int>("atlas.gutter", "texels between charts", CITYGO_FIELD(atlas.gutter)));
    t.push_back(number<int>("rig.azimuths", "rig views per elevation ring", CITYGO_FIELD(rig.azimuths)));
    t.push_back(number<int>("rig.top_views", "rig top views", CITYGO_FIELD(rig.top_views)));
    t.push_back(number<int>("rig.width", "rig image width", CITYGO_FIELD(rig.width)));
    t.push_back(number<int>("rig.height", "rig image height", CITYGO_FIELD(rig.height)));
    t.push_back(number<double>("render.guard", "guard interval d_g in m", CITYGO_FIELD(render.guard)));
    t.push_back(number<double>("render.min_transmittance", "blending early-out", CITYGO_FIELD(render.min_transmittance)));
    t.push_back(number<double>("render.cutoff_sigma", "splat extent in standard deviations", CITYGO_FIELD(render.cutoff_sigma)));
    t.push_back(number<double>("render.dilation", "px^2 added to projected covariances", CITYGO_FIELD(render.dilation)));
    {
      Entry e{{"render.background", "background color r,g,b"}, {}, {}};
      e.set = [](PipelineConfig& c, const std::string& v) {
        std::stringstream ss(v);
        std::string part;
        Vec3 bg;
        int n = 0;
        while (std::getline(ss, part, ',')) {
          if (n == 3) throw Error("config: render.background: expected 3 components");
          bg[n++] = parse_number<double>("render.background", trim(part));
        }
        if (n != 3) throw Error("config: render.background: expected 3 components");
        c.render.background = bg;
      };
      e.get = [](const PipelineConfig& c) {
        const Vec3& b = c.render.background;
        return format_double(b.x()) + "," + format_double(b.y()) + "," + format_double(b.z());
      };
      t.push_back(e);
    }
    t.push_back(number<double>("residual.threshold", "residual selection threshold", CITYGO_FIELD(residual_threshold)));
    t.push_back(number<double>("surround.fraction", "kept fraction of surrounding Gaussians", CITYGO_FIELD(surround_fraction)));
    t.push_back(number<int>("blocks.count", "target block count for the initial fit", CITYGO_FIELD(blocks)));
    t.push_back(number<double>("blocks.overlap", "block expansion per side, fraction of its extent", CITYGO_FIELD(block_overlap)));
    t.push_back(number<int>("init.iterations", "iterations of the initial Gaussian fit", CITYGO_FIELD(init_iterations)));
    t.push_back(number<double>("init.opacity", "initial Gaussian opacity", CITYGO_FIELD(init_opacity)));
    t.push_back(number<double>("init.scale_factor", "initial scale over mean neighbour distance", CITYGO_FIELD(init_scale_factor)));
    t.push_back(number<int>("init.neighbors", "neighbours for the initial scale", CITYGO_FIELD(init_neighbors)));
    t.push_back(number<int>("optim.gaussian_iterations", "Gaussian optimization iterations", CITYGO_FIELD(optim.gaussian_iterations)));
    t.push_back(number<int>("optim.texture_iterations", "texture finetuning view steps", CITYGO_FIELD(optim.texture_iterations)));
    t.push_back(number<double>("optim.base_lr", "opacity learning rate", CITYGO_FIELD(optim.base_lr)));
    t.push_back(number<double>("optim.color_lr_scale", "color rate over base", CITYGO_FIELD(optim.color_lr_scale)));
    t.push_back(number<double>("optim.scale_lr_scale", "scale rate over base", CITYGO_FIELD(optim.scale_lr_scale)));
    t.push_back(number<double>("optim.rotation_lr_scale", "rotation rate over base", CITYGO_FIELD(optim.rotation_lr_scale)));
    t.push_back(number<double>("optim.position_lr_fraction", "position rate over base, times scene extent", CITYGO_FIELD(optim.position_lr_fraction)));
    t.push_back(number<double>("optim.position_lr_final_ratio", "final over initial position rate", CITYGO_FIELD(optim.position_lr_final_ratio)));
    t.push_back(number<double>("optim.scene_extent", "scene extent in m, 0 = Gaussian bounds diagonal", CITYGO_FIELD(optim.scene_extent)));
    t.push_back(number<double>("optim.texture_lr", "initial texel rate", CITYGO_FIELD(optim.texture_lr)));
    t.push_back(number<double>("optim.texture_lr_final", "final texel rate", CITYGO_FIELD(optim.texture_lr_final)));
    t.push_back(number<int>("optim.densify_interval", "iterations between densification steps", CITYGO_FIELD(optim.densify_interval)));
    t.push_back(number<double>("optim.densify_stop_fraction", "densification stops at this fraction", CITYGO_FIELD(optim.densify_stop_fraction)));
    t.push_back(number<double>("optim.densify_grad_threshold", "densification gradient threshold", CITYGO_FIELD(optim.densify_grad_threshold)));
    t.push_back(number<double>("optim.percent_dense", "clone/split scale boundary over extent", CITYGO_FIELD(optim.percent_dense)));
    t.push_back(number<double>("optim.prune_opacity", "opacity below which Gaussians are pruned", CITYGO_FIELD(optim.prune_opacity)));
    t.push_back(number<std::size_t>("optim.max_gaussians", "cap on the Gaussian count", CITYGO_FIELD(optim.max_gaussians)));
    t.push_back(number<double>("optim.ssim_weight", "D-SSIM weight in the photometric loss", CITYGO_FIELD(optim.ssim_weight)));
    t.push_back(number<double>("optim.depth_weight", "initial depth-hinge weight", CITYGO_FIELD(optim.depth_weight)));
    t.push_back(number<double>("optim.depth_decay_fraction", "depth weight reaches 0 at this fraction", CITYGO_FIELD(optim.depth_decay_fraction)));
    t.push_back(number<int>("optim.kernel_size", "texture smoothing kernel side (odd)", CITYGO_FIELD(kernel_size)));
    t.push_back(number<double>("optim.kernel_sigma", "texture smoothing kernel sigma in texels", CITYGO_FIELD(kernel_sigma)));
    t.push_back(number<int>("pipeline.holdout_every", "every n-th view is held out", CITYGO_FIELD(holdout_every)));
    t.push_back(boolean("pipeline.baseline", "train a Gaussians-only baseline", CITYGO_FIELD(baseline)));
    t.push_back(number<std::uint64_t>("seed", "random seed", CITYGO_FIELD(seed)));
    return t;
  }();
  return table;
}

#undef CITYGO_FIELD

const Entry& find_entry(const std::string& key) {
  for (const Entry& e : entries())
    if (e.key.name == key) return e;
  throw Error("config: unknown key '" + key + "'");
}

}  // namespace

void PipelineConfig::finalize() {
  optim.kernel = SmoothingKernel::gaussian(kernel_size, kernel_sigma);
  optim.seed = seed;
  optim.validate();
  if (!(residual_threshold >= 0)) throw Error("config: residual.threshold must be non-negative");
  if (!(surround_fraction > 0 && surround_fraction <= 1)) throw Error("config: surround.fraction must be in (0, 1]");
  if (blocks < 1) throw Error("config: blocks.count must be at least 1");
  if (!(block_overlap >= 0)) throw Error("config: blocks.overlap must be non-negative");
  if (init_iterations < 0 || init_neighbors < 1 || !(init_opacity > 0 && init_opacity < 1) || !(init_scale_factor > 0))
    throw Error("config: invalid init.* value");
  if (holdout_every < 2) throw Error("config: pipeline.holdout_every must be at least 2");
  if (!(render.guard >= 0)) throw Error("config: render.guard must be non-negative");
}

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const Entry& e : entries()) out.push_back(e.key);
  return out;
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, value);
}

std::string get_config_value(const PipelineConfig& cfg, const std::string& key) { return find_entry(key).get(cfg); }

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("config: expected key=value, got '" + assignment + "'");
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(path.string() + ": cannot open");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string dump_config(const PipelineConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += e.key.name + " = " + e.get(cfg) + "  # " + e.key.help + "\n";
  return out;
}

}  // namespace citygo
