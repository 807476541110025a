#include "trackcast/train_eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "trackcast/errors.hpp"
#include "trackcast/ingest.hpp"
#include "trackcast/numerics/adam.hpp"
#include "trackcast/numerics/rng.hpp"

namespace trackcast::train {

std::string_view to_string(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

Dtype parse_dtype(std::string_view name) {
  if (name == "f32") return Dtype::F32;
  if (name == "f64") return Dtype::F64;
  throw SpecError("unknown dtype '" + std::string(name) + "' (expected f32 or f64)");
}

namespace {

std::string_view to_string(F1Average a) {
  return a == F1Average::Macro ? "macro" : "weighted";
}

F1Average parse_f1_average(std::string_view name) {
  if (name == "macro") return F1Average::Macro;
  if (name == "weighted") return F1Average::Weighted;
  throw SpecError("unknown f1_average '" + std::string(name) + "'");
}

}  // namespace

void TrainSpec::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw SpecError("train: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw SpecError("train: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw SpecError("train: eps must be positive");
  if (batch_size < 1) throw SpecError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw SpecError("train: max_epochs must be >= 1");
  if (early_stop_patience < 1) throw SpecError("train: early_stop_patience must be >= 1");
}

nlohmann::json train_spec_to_json(const TrainSpec& s) {
  return nlohmann::json{{"lr", s.lr},
                        {"beta1", s.beta1},
                        {"beta2", s.beta2},
                        {"eps", s.eps},
                        {"batch_size", s.batch_size},
                        {"max_epochs", s.max_epochs},
                        {"early_stop_patience", s.early_stop_patience},
                        {"seed", s.seed},
                        {"dtype", std::string(to_string(s.dtype))},
                        {"f1_average", std::string(to_string(s.f1_average))}};
}

TrainSpec train_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("train config must be a JSON object");
  TrainSpec s;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "lr") s.lr = val.get<double>();
      else if (key == "beta1") s.beta1 = val.get<double>();
      else if (key == "beta2") s.beta2 = val.get<double>();
      else if (key == "eps") s.eps = val.get<double>();
      else if (key == "batch_size") s.batch_size = val.get<std::size_t>();
      else if (key == "max_epochs") s.max_epochs = val.get<std::size_t>();
      else if (key == "early_stop_patience") s.early_stop_patience = val.get<std::size_t>();
      else if (key == "seed") s.seed = val.get<std::uint64_t>();
      else if (key == "dtype") s.dtype = parse_dtype(val.get<std::string>());
      else if (key == "f1_average") s.f1_average = parse_f1_average(val.get<std::string>());
      else throw SpecError("train config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw SpecError("train config: bad value for '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

// ---- losses ----

namespace {

std::size_t position_pairs(const num::Tensor<double>& a, const num::Tensor<double>& b,
                           const char* op) {
  num::check_same_shape(a.shape, b.shape, op);
  if (a.shape.empty() || a.shape.back() != 2)
    throw ShapeError(std::string(op) + ": expected trailing extent 2, got " +
                     num::shape_str(a.shape));
  return a.size() / 2;
}

}  // namespace

double loss_tp(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos) {
  const std::size_t pairs = position_pairs(true_pos, pred_pos, "loss_tp");
  if (pairs == 0) throw PreconditionError("loss_tp: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < true_pos.size(); ++i) {
    const double d = true_pos.v[i] - pred_pos.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pairs);
}

double loss_action(const std::vector<int>& true_actions, const num::Tensor<double>& probs) {
  if (probs.shape.size() != 2)
    throw ShapeError("loss_action: expected [L x N] probabilities");
  const std::size_t L = probs.shape[0], n = probs.shape[1];
  if (true_actions.size() != L)
    throw ShapeError("loss_action: " + std::to_string(true_actions.size()) + " labels vs " +
                     std::to_string(L) + " probability rows");
  if (L == 0) throw PreconditionError("loss_action: empty input");
  double acc = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    const int a = true_actions[j];
    if (a < 0 || static_cast<std::size_t>(a) >= n)
      throw PreconditionError("loss_action: label out of range");
    acc -= std::log(std::max(probs.v[j * n + static_cast<std::size_t>(a)], kLogClamp));
  }
  return acc / static_cast<double>(L);
}

double loss_mtl(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos,
                const std::vector<int>& true_actions, const num::Tensor<double>& probs,
                double lambda) {
  return loss_tp(true_pos, pred_pos) + lambda * loss_action(true_actions, probs);
}

template <typename T>
typename num::Tape<T>::Id task_loss_node(num::Tape<T>& tape, const models::ForwardPass<T>& fwd,
                                         const models::Batch<T>& batch,
                                         const models::ModelSpec& spec) {
  using Id = typename num::Tape<T>::Id;
  const T inv = T(1) / static_cast<T>(batch.size * kFutureSteps);
  Id loss = 0;
  bool have_loss = false;
  if (spec.task != models::Task::ActionOnly) {
    Id diff = tape.sub(fwd.positions, tape.constant(batch.true_positions));
    loss = tape.sum_all(tape.mul(diff, diff), inv);
    have_loss = true;
  }
  if (spec.task != models::Task::TP) {
    Id ce = tape.cross_entropy_probs(fwd.action_probs, batch.true_action_onehot, inv,
                                     static_cast<T>(kLogClamp));
    loss = have_loss ? tape.add(loss, tape.scale(ce, static_cast<T>(spec.lambda))) : ce;
  }
  return loss;
}

// ---- metrics ----

double ade(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos) {
  const std::size_t steps = position_pairs(true_pos, pred_pos, "ade");
  if (steps == 0) throw PreconditionError("ade: empty input");
  double acc = 0.0;
  for (std::size_t j = 0; j < steps; ++j) {
    acc += std::hypot(true_pos.v[j * 2] - pred_pos.v[j * 2],
                      true_pos.v[j * 2 + 1] - pred_pos.v[j * 2 + 1]);
  }
  return acc / static_cast<double>(steps);
}

double fde(const num::Tensor<double>& true_pos, const num::Tensor<double>& pred_pos) {
  const std::size_t steps = position_pairs(true_pos, pred_pos, "fde");
  if (steps == 0) throw PreconditionError("fde: empty input");
  // A leading extent of 3D input is the item count; 2D input is one item.
  const std::size_t items = true_pos.shape.size() >= 3 ? true_pos.shape[0] : 1;
  const std::size_t horizon = steps / items;
  double acc = 0.0;
  for (std::size_t b = 0; b < items; ++b) {
    const std::size_t j = b * horizon + horizon - 1;
    acc += std::hypot(true_pos.v[j * 2] - pred_pos.v[j * 2],
                      true_pos.v[j * 2 + 1] - pred_pos.v[j * 2 + 1]);
  }
  return acc / static_cast<double>(items);
}

double accuracy(const std::vector<int>& true_actions, const std::vector<int>& pred_actions) {
  if (true_actions.size() != pred_actions.size())
    throw PreconditionError("accuracy: label count mismatch");
  if (true_actions.empty()) throw PreconditionError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < true_actions.size(); ++i) {
    if (true_actions[i] == pred_actions[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(true_actions.size());
}

namespace {

struct ClassCounts {
  std::vector<std::size_t> tp, fp, fn, support;
};

ClassCounts count_classes(const std::vector<int>& truth, const std::vector<int>& pred,
                          std::size_t n_classes) {
  if (truth.size() != pred.size()) throw PreconditionError("f1: label count mismatch");
  if (truth.empty()) throw PreconditionError("f1: empty input");
  ClassCounts c;
  c.tp.assign(n_classes, 0);
  c.fp.assign(n_classes, 0);
  c.fn.assign(n_classes, 0);
  c.support.assign(n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_classes || p < 0 ||
        static_cast<std::size_t>(p) >= n_classes)
      throw PreconditionError("f1: label index out of range");
    ++c.support[static_cast<std::size_t>(t)];
    if (t == p) {
      ++c.tp[static_cast<std::size_t>(t)];
    } else {
      ++c.fn[static_cast<std::size_t>(t)];
      ++c.fp[static_cast<std::size_t>(p)];
    }
  }
  return c;
}

double class_f1(const ClassCounts& c, std::size_t k) {
  const double denom = static_cast<double>(2 * c.tp[k] + c.fp[k] + c.fn[k]);
  return denom > 0.0 ? 2.0 * static_cast<double>(c.tp[k]) / denom : 0.0;
}

}  // namespace

double macro_f1(const std::vector<int>& true_actions, const std::vector<int>& pred_actions,
                std::size_t n_classes) {
  const ClassCounts c = count_classes(true_actions, pred_actions, n_classes);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    if (c.tp[k] + c.fp[k] + c.fn[k] == 0) continue;  // absent from truth and prediction
    sum += class_f1(c, k);
    ++present;
  }
  if (present == 0) throw PreconditionError("macro_f1: no classes present");
  return sum / static_cast<double>(present);
}

double weighted_f1(const std::vector<int>& true_actions, const std::vector<int>& pred_actions,
                   std::size_t n_classes) {
  const ClassCounts c = count_classes(true_actions, pred_actions, n_classes);
  double sum = 0.0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    sum += static_cast<double>(c.support[k]) * class_f1(c, k);
    total += c.support[k];
  }
  return sum / static_cast<double>(total);
}

// ---- reporting ----

namespace {

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double m2 = 0.0;
  for (double x : xs) m2 += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(m2 / static_cast<double>(xs.size()));
  return r;
}

}  // namespace

MetricsReport aggregate_metrics(std::vector<FoldMetrics> per_fold) {
  if (per_fold.empty()) throw PreconditionError("aggregate_metrics: no folds");
  MetricsReport r;
  std::vector<double> ades, fdes, accs, f1s;
  bool all_acc = true, all_f1 = true;
  for (const auto& f : per_fold) {
    ades.push_back(f.ade);
    fdes.push_back(f.fde);
    if (f.acc) accs.push_back(*f.acc); else all_acc = false;
    if (f.f1) f1s.push_back(*f.f1); else all_f1 = false;
  }
  const MeanStd a = mean_std(ades), d = mean_std(fdes);
  r.ade_mean = a.mean;
  r.ade_std = a.std;
  r.fde_mean = d.mean;
  r.fde_std = d.std;
  if (all_acc) {
    const MeanStd m = mean_std(accs);
    r.acc_mean = m.mean;
    r.acc_std = m.std;
  }
  if (all_f1) {
    const MeanStd m = mean_std(f1s);
    r.f1_mean = m.mean;
    r.f1_std = m.std;
  }
  r.per_fold = std::move(per_fold);
  return r;
}

std::string metrics_ndjson(const MetricsReport& report, const std::string& timestamp) {
  std::ostringstream os;
  os << nlohmann::json{{"generated_at", timestamp}}.dump() << '\n';
  for (const auto& f : report.per_fold) {
    nlohmann::json j{{"fold", f.fold},     {"ade", f.ade},           {"fde", f.fde},
                     {"val_loss", f.val_loss}, {"epochs", f.epochs}};
    if (f.acc) j["acc"] = *f.acc;
    if (f.f1) j["f1"] = *f.f1;
    os << j.dump() << '\n';
  }
  nlohmann::json agg{{"aggregate", true},
                     {"folds", report.per_fold.size()},
                     {"ade_mean", report.ade_mean},
                     {"ade_std", report.ade_std},
                     {"fde_mean", report.fde_mean},
                     {"fde_std", report.fde_std}};
  if (report.acc_mean) {
    agg["acc_mean"] = *report.acc_mean;
    agg["acc_std"] = *report.acc_std;
  }
  if (report.f1_mean) {
    agg["f1_mean"] = *report.f1_mean;
    agg["f1_std"] = *report.f1_std;
  }
  os << agg.dump() << '\n';
  return os.str();
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "fold      ade      fde";
  const bool acc = std::all_of(report.per_fold.begin(), report.per_fold.end(),
                               [](const FoldMetrics& f) { return f.acc.has_value(); });
  const bool f1 = std::all_of(report.per_fold.begin(), report.per_fold.end(),
                              [](const FoldMetrics& f) { return f.f1.has_value(); });
  if (acc) os << "      acc";
  if (f1) os << "       f1";
  os << "   epochs\n";
  for (const auto& f : report.per_fold) {
    os << std::setw(4) << f.fold << ' ' << std::setw(8) << f.ade << ' ' << std::setw(8) << f.fde;
    if (acc) os << ' ' << std::setw(8) << *f.acc;
    if (f1) os << ' ' << std::setw(8) << *f.f1;
    os << ' ' << std::setw(8) << f.epochs << '\n';
  }
  os << "mean " << std::setw(8) << report.ade_mean << ' ' << std::setw(8) << report.fde_mean;
  if (acc) os << ' ' << std::setw(8) << *report.acc_mean;
  if (f1) os << ' ' << std::setw(8) << *report.f1_mean;
  os << '\n';
  os << "std  " << std::setw(8) << report.ade_std << ' ' << std::setw(8) << report.fde_std;
  if (acc) os << ' ' << std::setw(8) << *report.acc_std;
  if (f1) os << ' ' << std::setw(8) << *report.f1_std;
  os << '\n';
  return os.str();
}

// ---- evaluation ----

namespace {
constexpr std::size_t kEvalChunk = 256;

num::Tensor<double> future_positions(const Tracklet& t) {
  num::Tensor<double> p({kFutureSteps, 2});
  for (std::size_t j = 0; j < kFutureSteps; ++j) {
    p.v[j * 2] = t.future[j].x;
    p.v[j * 2 + 1] = t.future[j].y;
  }
  return p;
}

}  // namespace

template <typename T>
EvalMetrics evaluate(const models::Model<T>& model, const std::vector<Tracklet>& tracklets,
                     const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                     F1Average f1_average) {
  if (indices.empty()) throw PreconditionError("evaluate: empty index set");
  const bool with_actions = model.spec.task != models::Task::TP;
  const bool with_positions = model.spec.task != models::Task::ActionOnly;

  // Slots keyed by tracklet index; final reduction is in slot order so the
  // result cannot depend on how `indices` is permuted or chunked.
  std::vector<char> seen(tracklets.size(), 0);
  std::vector<double> ade_slot(tracklets.size(), 0.0), fde_slot(tracklets.size(), 0.0);
  std::vector<std::array<int, kFutureSteps>> true_slot, pred_slot;
  if (with_actions) {
    true_slot.resize(tracklets.size());
    pred_slot.resize(tracklets.size());
  }

  for (std::size_t at = 0; at < indices.size(); at += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, indices.size() - at);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                         indices.begin() + static_cast<std::ptrdiff_t>(at + n));
    const auto preds = models::predict(model, tracklets, chunk, vocab);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t slot = chunk[i];
      const Tracklet& t = tracklets[slot];
      seen[slot] = 1;
      if (with_positions) {
        const auto truth = future_positions(t);
        ade_slot[slot] = ade(truth, preds[i].positions);
        fde_slot[slot] = fde(truth, preds[i].positions);
      }
      if (with_actions) {
        for (std::size_t j = 0; j < kFutureSteps; ++j) {
          true_slot[slot][j] = vocab.index(t.future[j].action);
          pred_slot[slot][j] = vocab.index(preds[i].actions[j]);
        }
      }
    }
  }

  EvalMetrics out;
  std::vector<int> truth_pool, pred_pool;
  double ade_sum = 0.0, fde_sum = 0.0;
  for (std::size_t slot = 0; slot < tracklets.size(); ++slot) {
    if (!seen[slot]) continue;
    ++out.n;
    ade_sum += ade_slot[slot];
    fde_sum += fde_slot[slot];
    if (with_actions) {
      truth_pool.insert(truth_pool.end(), true_slot[slot].begin(), true_slot[slot].end());
      pred_pool.insert(pred_pool.end(), pred_slot[slot].begin(), pred_slot[slot].end());
    }
  }
  if (with_positions) {
    out.ade = ade_sum / static_cast<double>(out.n);
    out.fde = fde_sum / static_cast<double>(out.n);
  }
  if (with_actions) {
    out.acc = accuracy(truth_pool, pred_pool);
    out.f1 = f1_average == F1Average::Macro
                 ? macro_f1(truth_pool, pred_pool, vocab.actions().size())
                 : weighted_f1(truth_pool, pred_pool, vocab.actions().size());
  }
  return out;
}

template <typename T>
double dataset_loss(const models::Model<T>& model, const std::vector<Tracklet>& tracklets,
                    const std::vector<std::size_t>& indices, const Vocabulary& vocab) {
  if (indices.empty()) throw PreconditionError("dataset_loss: empty index set");
  std::vector<char> seen(tracklets.size(), 0);
  std::vector<double> loss_slot(tracklets.size(), 0.0);
  const auto& spec = model.spec;

  for (std::size_t at = 0; at < indices.size(); at += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, indices.size() - at);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(at),
                                         indices.begin() + static_cast<std::ptrdiff_t>(at + n));
    const auto preds = models::predict(model, tracklets, chunk, vocab);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t slot = chunk[i];
      const Tracklet& t = tracklets[slot];
      seen[slot] = 1;
      double l = 0.0;
      if (spec.task != models::Task::ActionOnly)
        l += loss_tp(future_positions(t), preds[i].positions);
      if (spec.task != models::Task::TP) {
        std::vector<int> labels(kFutureSteps);
        for (std::size_t j = 0; j < kFutureSteps; ++j) labels[j] = vocab.index(t.future[j].action);
        const double ce = loss_action(labels, *preds[i].action_probs);
        l = spec.task == models::Task::ActionOnly ? ce : l + spec.lambda * ce;
      }
      loss_slot[slot] = l;
    }
  }

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t slot = 0; slot < tracklets.size(); ++slot) {
    if (!seen[slot]) continue;
    sum += loss_slot[slot];
    ++n;
  }
  return sum / static_cast<double>(n);
}

// ---- training ----

template <typename T>
FoldResult<T> train_fold(const std::vector<Tracklet>& tracklets,
                         const std::vector<std::size_t>& train_idx,
                         const std::vector<std::size_t>& val_idx,
                         const models::ModelSpec& model_spec, const TrainSpec& train_spec,
                         const Vocabulary& vocab) {
  model_spec.validate();
  train_spec.validate();
  if (train_idx.empty() || val_idx.empty())
    throw PreconditionError("train_fold: empty train or validation split");

  auto model = models::Model<T>::build(model_spec, train_spec.seed);
  const num::AdamConfig adam{train_spec.lr, train_spec.beta1, train_spec.beta2, train_spec.eps};
  num::Rng shuffle_rng(num::derive_seed(train_spec.seed, "shuffle"));

  std::vector<std::size_t> order = train_idx;
  std::vector<std::size_t> val_sorted = val_idx;
  std::sort(val_sorted.begin(), val_sorted.end());

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<num::Tensor<T>> best_params;
  std::size_t patience_left = train_spec.early_stop_patience;
  std::size_t epochs_run = 0;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= train_spec.max_epochs; ++epoch) {
    epochs_run = epoch;
    shuffle_rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += train_spec.batch_size) {
      const std::size_t n = std::min(train_spec.batch_size, order.size() - at);
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(at),
                                           order.begin() + static_cast<std::ptrdiff_t>(at + n));
      num::Tape<T> tape;
      const auto batch = models::make_batch<T>(tracklets, chunk, vocab, model_spec);
      const auto fwd = model.forward(tape, batch);
      const auto loss = task_loss_node(tape, fwd, batch, model_spec);
      const double lv = static_cast<double>(tape.value(loss).v[0]);
      if (!std::isfinite(lv))
        throw NumericalError("training loss went non-finite at epoch " + std::to_string(epoch));
      tape.backward(loss);
      ++step;
      for (std::size_t i = 0; i < model.params.size(); ++i)
        num::adam_step(model.params[i], tape.grad(fwd.param_ids[i]), adam, step);
    }

    const double vl = dataset_loss(model, tracklets, val_sorted, vocab);
    if (!std::isfinite(vl))
      throw NumericalError("validation loss went non-finite at epoch " + std::to_string(epoch));
    if (vl < best_val) {
      best_val = vl;
      best_params.clear();
      for (const auto& p : model.params) best_params.push_back(p.value);
      patience_left = train_spec.early_stop_patience;
    } else if (--patience_left == 0) {
      break;
    }
  }

  for (std::size_t i = 0; i < model.params.size(); ++i)
    model.params[i].value = best_params[i];

  const EvalMetrics em =
      evaluate(model, tracklets, val_sorted, vocab, train_spec.f1_average);
  FoldResult<T> out{std::move(model), FoldMetrics{}};
  out.metrics.ade = em.ade;
  out.metrics.fde = em.fde;
  out.metrics.acc = em.acc;
  out.metrics.f1 = em.f1;
  out.metrics.val_loss = best_val;
  out.metrics.epochs = epochs_run;
  return out;
}

template <typename T>
CrossValidation<T> cross_validate(const std::vector<Tracklet>& tracklets, int k,
                                  const models::ModelSpec& model_spec,
                                  const TrainSpec& train_spec, const Vocabulary& vocab,
                                  int jobs) {
  const auto folds = ingest::assign_folds(tracklets, k, train_spec.seed);

  std::vector<std::vector<std::size_t>> val_indices(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    const int f = folds.fold(tracklets[i].source_trajectory_id);
    val_indices[static_cast<std::size_t>(f)].push_back(i);
  }
  for (int f = 0; f < k; ++f) {
    if (val_indices[static_cast<std::size_t>(f)].empty())
      throw SpecError("cross_validate: fold " + std::to_string(f) + " received no tracklets");
  }

  std::vector<std::optional<FoldResult<T>>> results(static_cast<std::size_t>(k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(k));
  std::atomic<int> next{0};

  auto run_fold = [&](int f) {
    const auto& val = val_indices[static_cast<std::size_t>(f)];
    std::vector<std::size_t> train_set;
    train_set.reserve(tracklets.size() - val.size());
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      const auto& v = val_indices[static_cast<std::size_t>(g)];
      train_set.insert(train_set.end(), v.begin(), v.end());
    }
    std::sort(train_set.begin(), train_set.end());
    TrainSpec fold_spec = train_spec;
    fold_spec.seed = num::derive_seed(train_spec.seed, "fold", static_cast<std::uint64_t>(f));
    auto r = train_fold<T>(tracklets, train_set, val, model_spec, fold_spec, vocab);
    r.metrics.fold = f;
    results[static_cast<std::size_t>(f)] = std::move(r);
  };

  const int workers = std::max(1, std::min(jobs, k));
  if (workers == 1) {
    for (int f = 0; f < k; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int f = next.fetch_add(1); f < k; f = next.fetch_add(1)) {
          try {
            run_fold(f);
          } catch (...) {
            errors[static_cast<std::size_t>(f)] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (int f = 0; f < k; ++f) {
      if (errors[static_cast<std::size_t>(f)]) std::rethrow_exception(errors[static_cast<std::size_t>(f)]);
    }
  }

  CrossValidation<T> out;
  std::vector<FoldMetrics> per_fold;
  for (int f = 0; f < k; ++f) {
    per_fold.push_back(results[static_cast<std::size_t>(f)]->metrics);
    out.folds.push_back(std::move(*results[static_cast<std::size_t>(f)]));
  }
  out.report = aggregate_metrics(std::move(per_fold));
  out.val_indices = std::move(val_indices);
  return out;
}

template typename num::Tape<float>::Id task_loss_node<float>(num::Tape<float>&,
                                                             const models::ForwardPass<float>&,
                                                             const models::Batch<float>&,
                                                             const models::ModelSpec&);
template typename num::Tape<double>::Id task_loss_node<double>(
    num::Tape<double>&, const models::ForwardPass<double>&, const models::Batch<double>&,
    const models::ModelSpec&);
template EvalMetrics evaluate<float>(const models::Model<float>&, const std::vector<Tracklet>&,
                                     const std::vector<std::size_t>&, const Vocabulary&,
                                     F1Average);
template EvalMetrics evaluate<double>(const models::Model<double>&, const std::vector<Tracklet>&,
                                      const std::vector<std::size_t>&, const Vocabulary&,
                                      F1Average);
template double dataset_loss<float>(const models::Model<float>&, const std::vector<Tracklet>&,
                                    const std::vector<std::size_t>&, const Vocabulary&);
template double dataset_loss<double>(const models::Model<double>&, const std::vector<Tracklet>&,
                                     const std::vector<std::size_t>&, const Vocabulary&);
template FoldResult<float> train_fold<float>(const std::vector<Tracklet>&,
                                             const std::vector<std::size_t>&,
                                             const std::vector<std::size_t>&,
                                             const models::ModelSpec&, const TrainSpec&,
                                             const Vocabulary&);
template FoldResult<double> train_fold<double>(const std::vector<Tracklet>&,
                                               const std::vector<std::size_t>&,
                                               const std::vector<std::size_t>&,
                                               const models::ModelSpec&, const TrainSpec&,
                                               const Vocabulary&);
template CrossValidation<float> cross_validate<float>(const std::vector<Tracklet>&, int,
                                                      const models::ModelSpec&, const TrainSpec&,
                                                      const Vocabulary&, int);
template CrossValidation<double> cross_validate<double>(const std::vector<Tracklet>&, int,
                                                        const models::ModelSpec&,
                                                        const TrainSpec&, const Vocabulary&,
                                                        int);

}  // namespace trackcast::train
