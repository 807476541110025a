#pragma once

#include <optional>
#include <string>
#include <vector>

#include "trackcast/models.hpp"
#include "trackcast/train_eval.hpp"

namespace trackcast {

// Everything needed to rebuild and re-evaluate a trained model: the model
// spec, the vocabulary it was trained with, and the validation split it was
// scored on.
// Stored as JSON next to the parameter file (same path with ".json" added).
struct CheckpointMeta {
  train::Dtype dtype = train::Dtype::F32;
  ScenarioSelector vocabulary = ScenarioSelector::Scenarios2and3;
  models::ModelSpec spec;
  int fold = -1;
  std::vector<std::string> val_trajectory_ids;
  std::optional<train::FoldMetrics> metrics;
};

std::string checkpoint_meta_path(const std::string& ckpt_path);

template <typename T>
void save_model_checkpoint(const std::string& ckpt_path, const models::Model<T>& model,
                           const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::string& ckpt_path);  // SchemaError on mismatch

// Rebuilds the architecture from meta and loads the stored values; parameter
// name or shape disagreements are schema errors.
template <typename T>
models::Model<T> load_model_checkpoint(const std::string& ckpt_path, const CheckpointMeta& meta);

}  // namespace trackcast
