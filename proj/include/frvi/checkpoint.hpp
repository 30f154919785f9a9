#pragma once

// Checkpoint directory: "manifest.txt" (architecture, stage, step, flat
// settings, parameter table) plus one float64 raster per parameter under
// params/ and optional Adam moments under adam/.

#include <optional>
#include <string>

#include "frvi/config.hpp"
#include "frvi/nets.hpp"
#include "frvi/optim.hpp"

namespace frvi {

struct Checkpoint {
  Model model;
  std::string stage = "init";
  std::int64_t step = 0;
  Settings settings;
  std::optional<AdamState> adam;
  // Loss at the first step of the stage (divergence guard reference).
  std::optional<double> initial_loss;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);

// Loads parameter values into an existing model. Every parameter of the
// model must be present with the same shape; mismatches name the parameter.
void load_params(const std::string& dir, Model& model);

ModelConfig read_model_config(const Settings& manifest);
void write_model_config(const ModelConfig& cfg, Settings& out);

}  // namespace frvi
