#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackcast/data_model.hpp"
#include "trackcast/models.hpp"
#include "trackcast/numerics/tape.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::train {

enum class Dtype { F32, F64 };
enum class F1Average { Macro, Weighted };

std::string_view to_string(Dtype d);
Dtype parse_dtype(std::string_view name);  // throws SpecError

// Optimizer and loop settings. lambda lives on ModelSpec; the trainer reads
// it from there.
struct TrainSpec {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t early_stop_patience = 10;
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::F32;
  F1Average f1_average = F1Average::Macro;

  void validate() const;  // throws SpecError
};

nlohmann::json train_spec_to_json(const TrainSpec& spec);
TrainSpec train_spec_from_json(const nlohmann::json& j);

// ---- losses ----
// Plain 64-bit versions for oracles and reporting; the tape builders below
// are what training differentiates. Position tensors are [L x 2] or
// [B x L x 2]; the loss is the mean over all (item, step) pairs.

double loss_tp(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos);
double loss_action(const std::vector<int>& true_actions, const num::Tensor<double>& probs);
double loss_mtl(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos,
                const std::vector<int>& true_actions, const num::Tensor<double>& probs,
                double lambda);

inline constexpr double kLogClamp = 1e-12;

// Scalar task-loss node for one forward pass: TP mean squared position error,
// action cross-entropy, or their lambda-weighted sum for MTL.
template <typename T>
typename num::Tape<T>::Id task_loss_node(num::Tape<T>& tape, const models::ForwardPass<T>& fwd,
                                         const models::Batch<T>& batch,
                                         const models::ModelSpec& spec);

// ---- metrics ----

double ade(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos);
double fde(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos);
double accuracy(const std::vector<int>& true_actions, const std::vector<int>& pred_actions);
// Classes absent from both truth and prediction are excluded from the mean;
// n_classes is the vocabulary size indices are drawn from.
double macro_f1(const std::vector<int>& true_actions, const std::vector<int>& pred_actions,
                std::size_t n_classes);
double weighted_f1(const std::vector<int>& true_actions, const std::vector<int>& pred_actions,
                   std::size_t n_classes);

struct FoldMetrics {
  int fold = 0;
  double ade = 0.0;
  double fde = 0.0;
  std::optional<double> acc;
  std::optional<double> f1;
  double val_loss = 0.0;
  std::size_t epochs = 0;
};

struct MetricsReport {
  std::vector<FoldMetrics> per_fold;
  double ade_mean = 0.0, ade_std = 0.0;
  double fde_mean = 0.0, fde_std = 0.0;
  std::optional<double> acc_mean, acc_std;
  std::optional<double> f1_mean, f1_std;
};

MetricsReport aggregate_metrics(std::vector<FoldMetrics> per_fold);

// Newline-delimited JSON: one header line carrying the timestamp (the only
// non-reproducible byte in the file), one line per fold, one aggregate line.
std::string metrics_ndjson(const MetricsReport& report, const std::string& timestamp);
std::string metrics_table(const MetricsReport& report);

// ---- evaluation ----

struct EvalMetrics {
  std::size_t n = 0;
  double ade = 0.0;
  double fde = 0.0;
  std::optional<double> acc;
  std::optional<double> f1;
};

// Runs the model over the given tracklets and pools metrics. Per-item values
// land in slots keyed by the index value, and the reduction runs in slot
// order, so any permutation of `indices` yields bit-identical results.
template <typename T>
EvalMetrics evaluate(const models::Model<T>& model, const std::vector<Tracklet>& tracklets,
                     const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                     F1Average f1_average = F1Average::Macro);

// Mean task loss over the set, reduced in ascending-index order.
template <typename T>
double dataset_loss(const models::Model<T>& model, const std::vector<Tracklet>& tracklets,
                    const std::vector<std::size_t>& indices, const Vocabulary& vocab);

// ---- training ----

template <typename T>
struct FoldResult {
  models::Model<T> model;  // parameters from the best-validation epoch
  FoldMetrics metrics;
};

// Mini-batch Adam with early stopping on validation loss; restores the best
// checkpoint before computing metrics. Deterministic given the seed. Throws
// NumericalError when a loss goes non-finite, PreconditionError on empty
// splits.
template <typename T>
FoldResult<T> train_fold(const std::vector<Tracklet>& tracklets,
                         const std::vector<std::size_t>& train_idx,
                         const std::vector<std::size_t>& val_idx,
                         const models::ModelSpec& model_spec, const TrainSpec& train_spec,
                         const Vocabulary& vocab);

template <typename T>
struct CrossValidation {
  MetricsReport report;
  std::vector<FoldResult<T>> folds;
  std::vector<std::vector<std::size_t>> val_indices;  // per fold, ascending
};

// Grouped k-fold: fold i validates on fold i's trajectories, trains on the
// rest. Folds run on `jobs` threads; results are aggregated in fold order so
// the report does not depend on scheduling.
template <typename T>
CrossValidation<T> cross_validate(const std::vector<Tracklet>& tracklets, int k,
                                  const models::ModelSpec& model_spec,
                                  const TrainSpec& train_spec, const Vocabulary& vocab,
                                  int jobs = 1);

}  // namespace trackcast::train
