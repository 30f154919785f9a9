#include "frvi/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace frvi {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "frvi-checkpoint";
constexpr int kVersion = 1;

std::string shape_text(const Shape& s) {
  return std::to_string(s.channels) + " " + std::to_string(s.height) + " " +
         std::to_string(s.width);
}

Shape parse_shape(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  Shape s;
  if (!(is >> s.channels >> s.height >> s.width) || s.channels < 0 || s.height < 0 ||
      s.width < 0) {
    throw IoError("checkpoint: malformed shape for " + key);
  }
  return s;
}

const std::string& need(const Settings& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw IoError("checkpoint manifest lacks '" + key + "'");
  return it->second;
}

Settings read_manifest(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.txt").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint manifest " + path);
  Settings m = parse_settings(in, path);
  if (need(m, "format") != kFormat) throw IoError(path + " is not a checkpoint manifest");
  if (parse_int("version", need(m, "version")) != kVersion) {
    throw IoError("unsupported checkpoint version in " + path);
  }
  return m;
}

Tensor read_blob(const std::string& path, const std::string& name, const Shape& want) {
  RasterHeader hdr;
  Tensor t = read_raster(path, &hdr);
  if (hdr.type != RasterType::Float64) throw IoError("checkpoint blob " + name + " is not float64");
  if (t.shape() != want) {
    throw ShapeError("checkpoint parameter " + name + ": shape " + to_string(t.shape()) +
                     " does not match expected " + to_string(want));
  }
  return t;
}

}  // namespace

void write_model_config(const ModelConfig& cfg, Settings& out) {
  out["model.inpaint_channels"] = std::to_string(cfg.inpaint_channels);
  out["model.blend_channels"] = std::to_string(cfg.blend_channels);
  out["model.refine_channels"] = std::to_string(cfg.refine_channels);
  out["model.lstm_hidden"] = std::to_string(cfg.lstm_hidden);
  out["model.depth"] = std::to_string(cfg.depth);
  out["model.seed"] = std::to_string(cfg.seed);
}

ModelConfig read_model_config(const Settings& m) {
  ModelConfig cfg;
  auto get = [&](const char* key) {
    return static_cast<int>(parse_int(key, need(m, key)));
  };
  cfg.inpaint_channels = get("model.inpaint_channels");
  cfg.blend_channels = get("model.blend_channels");
  cfg.refine_channels = get("model.refine_channels");
  cfg.lstm_hidden = get("model.lstm_hidden");
  cfg.depth = get("model.depth");
  cfg.seed = parse_u64("model.seed", need(m, "model.seed"));
  if (cfg.inpaint_channels < 1 || cfg.blend_channels < 1 || cfg.refine_channels < 1 ||
      cfg.lstm_hidden < 1) {
    throw IoError("checkpoint: channel counts must be positive");
  }
  return cfg;
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  fs::create_directories(fs::path(dir) / "params");
  Settings m;
  m["format"] = kFormat;
  m["version"] = std::to_string(kVersion);
  m["stage"] = ckpt.stage;
  m["step"] = std::to_string(ckpt.step);
  write_model_config(ckpt.model.config, m);
  for (const auto& [k, v] : ckpt.settings) m["setting." + k] = v;
  if (ckpt.initial_loss) m["initial_loss"] = format_double(*ckpt.initial_loss);
  for (const auto& [prefix, net] : ckpt.model.networks()) {
    for (const auto& e : net->entries()) {
      m["param." + e.name] = shape_text(e.var.shape());
      write_raster((fs::path(dir) / "params" / (e.name + ".f64")).string(), e.var.value(),
                   RasterType::Float64);
    }
  }
  if (ckpt.adam) {
    fs::create_directories(fs::path(dir) / "adam");
    m["adam.step"] = std::to_string(ckpt.adam->step);
    for (const auto& [name, mo] : ckpt.adam->moments) {
      m["adam." + name] = shape_text(mo.m.shape());
      const fs::path base = fs::path(dir) / "adam" / name;
      write_raster(base.string() + ".m.f64", mo.m, RasterType::Float64);
      write_raster(base.string() + ".v.f64", mo.v, RasterType::Float64);
    }
  }
  std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
  out << format_settings(m);
  if (!out) throw IoError("failed to write checkpoint manifest in " + dir);
}

void load_params(const std::string& dir, Model& model) {
  const Settings m = read_manifest(dir);
  for (const auto& [prefix, net] : model.networks()) {
    for (const auto& e : net->entries()) {
      auto it = m.find("param." + e.name);
      if (it == m.end()) throw ShapeError("checkpoint lacks parameter " + e.name);
      const Shape stored = parse_shape(e.name, it->second);
      if (stored != e.var.shape()) {
        throw ShapeError("checkpoint parameter " + e.name + ": shape " + to_string(stored) +
                         " does not match expected " + to_string(e.var.shape()));
      }
      net->value(e.name) =
          read_blob((fs::path(dir) / "params" / (e.name + ".f64")).string(), e.name, stored);
    }
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  const Settings m = read_manifest(dir);
  Checkpoint ckpt;
  ckpt.model = Model(read_model_config(m));
  ckpt.stage = need(m, "stage");
  ckpt.step = parse_int("step", need(m, "step"));
  load_params(dir, ckpt.model);
  if (m.count("initial_loss")) {
    ckpt.initial_loss = parse_double("initial_loss", m.at("initial_loss"));
  }
  for (const auto& [k, v] : m) {
    if (k.rfind("setting.", 0) == 0) ckpt.settings[k.substr(8)] = v;
  }
  if (m.count("adam.step")) {
    AdamState adam;
    adam.step = parse_int("adam.step", m.at("adam.step"));
    for (const auto& [k, v] : m) {
      if (k.rfind("adam.", 0) != 0 || k == "adam.step") continue;
      const std::string name = k.substr(5);
      const Shape s = parse_shape(k, v);
      const fs::path base = fs::path(dir) / "adam" / name;
      adam.moments[name] = {read_blob(base.string() + ".m.f64", name, s),
                            read_blob(base.string() + ".v.f64", name, s)};
    }
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

}  // namespace frvi
