#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackcast/data_model.hpp"
#include "trackcast/numerics/layers.hpp"
#include "trackcast/numerics/tape.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::models {

enum class Task { TP, MTL, ActionOnly };

std::string_view to_string(Task t);
Task parse_task(std::string_view name);  // throws SpecError

// Architecture switches and widths. Defaults land the baseline near the
// published ~36.7K parameter budget.
struct ModelSpec {
  bool use_agent_class = false;
  bool use_actions_in_input = false;
  std::size_t heads = 2;
  std::size_t encoder_layers = 1;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t embed_hidden = 64;
  std::size_t decoder_hidden = 64;
  std::size_t agent_embed_dim = 16;
  Task task = Task::TP;
  std::size_t action_vocab_size = 10;
  std::size_t agent_vocab_size = 5;
  double lambda = 1.0;

  // Per-step input width: (x, y, vx, vy) plus the action one-hot when
  // actions are fed at the input.
  std::size_t input_width() const {
    return 4 + (use_actions_in_input ? action_vocab_size : 0);
  }
  std::size_t decoder_input_width() const {
    return kObservedSteps * d_model + (use_agent_class ? agent_embed_dim : 0);
  }

  void validate() const;  // throws SpecError
};

nlohmann::json model_spec_to_json(const ModelSpec& spec);
// Starts from defaults and overrides the keys present; unknown keys are
// config errors.
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Model inputs for a set of tracklets, origin-relative: positions are
// translated so each tracklet's last observed position is (0,0); velocities
// pass through unchanged.
template <typename T>
struct Batch {
  std::size_t size = 0;
  num::Tensor<T> inputs;                 // [B*8 x input_width]
  std::vector<int> agent_rows;           // B entries when agent class is used
  num::Tensor<T> origins;                // [B x 2], absolute
  num::Tensor<T> true_positions;         // [B x 12 x 2], absolute
  num::Tensor<T> true_action_onehot;     // [B*12 x N_A] when task != TP
  std::vector<int> true_action_index;    // B*12 entries when task != TP
};

template <typename T>
Batch<T> make_batch(const std::vector<Tracklet>& tracklets,
                    const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                    const ModelSpec& spec);

// One forward pass recorded on a tape. param_ids parallels Model::params so
// the trainer can read gradients back per parameter.
template <typename T>
struct ForwardPass {
  using Id = typename num::Tape<T>::Id;
  bool has_positions = false;
  Id velocities = 0;    // [B x 12 x 2]
  Id positions = 0;     // [B x 12 x 2]
  bool has_actions = false;
  Id action_probs = 0;  // [B*12 x N_A]
  std::vector<Id> param_ids;
};

template <typename T>
struct Model {
  ModelSpec spec;
  std::vector<num::Parameter<T>> params;
  num::Tensor<T> positional;  // [8 x d_model], fixed

  static Model build(const ModelSpec& spec, std::uint64_t seed);

  std::size_t param_count() const;
  const num::Parameter<T>& param(std::string_view name) const;  // PreconditionError if absent

  // Pure function of (params, batch); no state is carried across calls.
  ForwardPass<T> forward(num::Tape<T>& tape, const Batch<T>& batch) const;
};

struct PredictionOutput {
  num::Tensor<double> velocities;                    // [12 x 2] m/s
  num::Tensor<double> positions;                     // [12 x 2] m
  std::optional<num::Tensor<double>> action_probs;   // [12 x N_A]
  std::vector<ActionClass> actions;                  // argmax rows when probs present
};

// Ties resolve to the lowest index.
std::size_t argmax_lowest(const double* row, std::size_t n);

// p_j = origin + dt * sum_{i<=j} v_i over rows of a [L x 2] velocity tensor.
num::Tensor<double> integrate(double origin_x, double origin_y,
                              const num::Tensor<double>& velocities, double dt = kTimestep);

template <typename T>
std::vector<PredictionOutput> predict(const Model<T>& model,
                                      const std::vector<Tracklet>& tracklets,
                                      const std::vector<std::size_t>& indices,
                                      const Vocabulary& vocab);

}  // namespace trackcast::models
