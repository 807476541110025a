#include "trackcast/models.hpp"

#include <algorithm>
#include <cmath>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/rng.hpp"

namespace trackcast::models {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::TP: return "TP";
    case Task::MTL: return "MTL";
    case Task::ActionOnly: return "ActionOnly";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "TP") return Task::TP;
  if (name == "MTL") return Task::MTL;
  if (name == "ActionOnly") return Task::ActionOnly;
  throw SpecError("unknown task '" + std::string(name) + "' (expected TP, MTL, or ActionOnly)");
}

void ModelSpec::validate() const {
  if (heads < 1) throw SpecError("model: heads must be >= 1");
  if (encoder_layers < 1) throw SpecError("model: encoder_layers must be >= 1");
  const std::size_t widths[] = {d_model, d_ff, embed_hidden, decoder_hidden, agent_embed_dim};
  for (std::size_t w : widths) {
    if (w < 1) throw SpecError("model: all widths must be >= 1");
  }
  if (d_model % heads != 0) throw SpecError("model: d_model must be divisible by heads");
  if (action_vocab_size < 2) throw SpecError("model: action_vocab_size must be >= 2");
  if (agent_vocab_size < 1) throw SpecError("model: agent_vocab_size must be >= 1");
  if (!std::isfinite(lambda) || lambda < 0.0) throw SpecError("model: lambda must be finite, >= 0");
}

nlohmann::json model_spec_to_json(const ModelSpec& s) {
  return nlohmann::json{{"use_agent_class", s.use_agent_class},
                        {"use_actions_in_input", s.use_actions_in_input},
                        {"heads", s.heads},
                        {"encoder_layers", s.encoder_layers},
                        {"d_model", s.d_model},
                        {"d_ff", s.d_ff},
                        {"embed_hidden", s.embed_hidden},
                        {"decoder_hidden", s.decoder_hidden},
                        {"agent_embed_dim", s.agent_embed_dim},
                        {"task", std::string(to_string(s.task))},
                        {"action_vocab_size", s.action_vocab_size},
                        {"agent_vocab_size", s.agent_vocab_size},
                        {"lambda", s.lambda}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("model config must be a JSON object");
  ModelSpec s;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "use_agent_class") s.use_agent_class = val.get<bool>();
      else if (key == "use_actions_in_input") s.use_actions_in_input = val.get<bool>();
      else if (key == "heads") s.heads = val.get<std::size_t>();
      else if (key == "encoder_layers") s.encoder_layers = val.get<std::size_t>();
      else if (key == "d_model") s.d_model = val.get<std::size_t>();
      else if (key == "d_ff") s.d_ff = val.get<std::size_t>();
      else if (key == "embed_hidden") s.embed_hidden = val.get<std::size_t>();
      else if (key == "decoder_hidden") s.decoder_hidden = val.get<std::size_t>();
      else if (key == "agent_embed_dim") s.agent_embed_dim = val.get<std::size_t>();
      else if (key == "task") s.task = parse_task(val.get<std::string>());
      else if (key == "action_vocab_size") s.action_vocab_size = val.get<std::size_t>();
      else if (key == "agent_vocab_size") s.agent_vocab_size = val.get<std::size_t>();
      else if (key == "lambda") s.lambda = val.get<double>();
      else throw SpecError("model config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw SpecError("model config: bad value for '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

// ---- batch assembly ----

template <typename T>
Batch<T> make_batch(const std::vector<Tracklet>& tracklets,
                    const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                    const ModelSpec& spec) {
  const std::size_t B = indices.size();
  const std::size_t in_w = spec.input_width();
  Batch<T> batch;
  batch.size = B;
  batch.inputs = num::Tensor<T>({B * kObservedSteps, in_w});
  batch.origins = num::Tensor<T>({B, 2});
  batch.true_positions = num::Tensor<T>({B, kFutureSteps, 2});
  const bool want_actions = spec.task != Task::TP;
  if (want_actions) {
    batch.true_action_onehot = num::Tensor<T>({B * kFutureSteps, spec.action_vocab_size});
    batch.true_action_index.resize(B * kFutureSteps);
  }
  if (spec.use_agent_class) batch.agent_rows.resize(B);

  if (spec.use_actions_in_input && vocab.actions().size() != spec.action_vocab_size)
    throw VocabError("make_batch: vocabulary has " + std::to_string(vocab.actions().size()) +
                     " actions but the model expects " + std::to_string(spec.action_vocab_size));
  if (spec.use_agent_class && vocab.agent_classes().size() != spec.agent_vocab_size)
    throw VocabError("make_batch: vocabulary has " + std::to_string(vocab.agent_classes().size()) +
                     " agent classes but the model expects " +
                     std::to_string(spec.agent_vocab_size));

  for (std::size_t b = 0; b < B; ++b) {
    const Tracklet& t = tracklets[indices[b]];
    if (t.observed.size() != kObservedSteps || t.future.size() != kFutureSteps)
      throw PreconditionError("make_batch: tracklet has wrong window lengths");

    const double ox = t.observed.back().x;
    const double oy = t.observed.back().y;
    batch.origins.v[b * 2] = static_cast<T>(ox);
    batch.origins.v[b * 2 + 1] = static_cast<T>(oy);

    for (std::size_t s = 0; s < kObservedSteps; ++s) {
      T* row = batch.inputs.data() + (b * kObservedSteps + s) * in_w;
      const State& st = t.observed[s];
      row[0] = static_cast<T>(st.x - ox);
      row[1] = static_cast<T>(st.y - oy);
      row[2] = static_cast<T>(st.vx);
      row[3] = static_cast<T>(st.vy);
      if (spec.use_actions_in_input) row[4 + vocab.index(st.action)] = T(1);
    }
    for (std::size_t s = 0; s < kFutureSteps; ++s) {
      const State& st = t.future[s];
      batch.true_positions.v[(b * kFutureSteps + s) * 2] = static_cast<T>(st.x);
      batch.true_positions.v[(b * kFutureSteps + s) * 2 + 1] = static_cast<T>(st.y);
      if (want_actions) {
        const int idx = vocab.index(st.action);
        batch.true_action_index[b * kFutureSteps + s] = idx;
        batch.true_action_onehot.v[(b * kFutureSteps + s) * spec.action_vocab_size +
                                   static_cast<std::size_t>(idx)] = T(1);
      }
    }
    if (spec.use_agent_class) batch.agent_rows[b] = vocab.index(t.agent_class);
  }
  return batch;
}

// ---- model construction ----

template <typename T>
Model<T> Model<T>::build(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model<T> model;
  model.spec = spec;
  model.positional = num::sinusoidal_positional_encoding<double>(kObservedSteps, spec.d_model)
                         .template cast<T>();

  // All draws happen in double so float and double models share the same
  // initial values; registration order is fixed and the action head comes
  // last so TP-shared parameters form a stable prefix.
  num::Rng rng(num::derive_seed(seed, "model-init"));
  auto& params = model.params;

  auto weight = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    params.emplace_back(name,
                        num::init_linear_weight<double>(fan_in, fan_out, rng).template cast<T>());
  };
  auto zeros = [&](const std::string& name, std::size_t n) {
    params.emplace_back(name, num::Tensor<T>({n}));
  };
  auto ones = [&](const std::string& name, std::size_t n) {
    num::Tensor<T> t({n});
    std::fill(t.v.begin(), t.v.end(), T(1));
    params.emplace_back(name, std::move(t));
  };
  auto linear = [&](const std::string& stem, std::size_t fan_in, std::size_t fan_out) {
    weight(stem + ".W", fan_in, fan_out);
    zeros(stem + ".b", fan_out);
  };

  linear("embed.l1", spec.input_width(), spec.embed_hidden);
  linear("embed.l2", spec.embed_hidden, spec.d_model);

  for (std::size_t l = 0; l < spec.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    linear(p + ".q", spec.d_model, spec.d_model);
    linear(p + ".k", spec.d_model, spec.d_model);
    linear(p + ".v", spec.d_model, spec.d_model);
    linear(p + ".o", spec.d_model, spec.d_model);
    ones(p + ".ln1.g", spec.d_model);
    zeros(p + ".ln1.b", spec.d_model);
    linear(p + ".ff1", spec.d_model, spec.d_ff);
    linear(p + ".ff2", spec.d_ff, spec.d_model);
    ones(p + ".ln2.g", spec.d_model);
    zeros(p + ".ln2.b", spec.d_model);
  }

  if (spec.use_agent_class) {
    params.emplace_back(
        "agent.table",
        num::init_embedding<double>(spec.agent_vocab_size, spec.agent_embed_dim, rng)
            .template cast<T>());
  }

  const std::size_t dec_in = spec.decoder_input_width();
  if (spec.task != Task::ActionOnly) {
    linear("traj.l1", dec_in, spec.decoder_hidden);
    linear("traj.l2", spec.decoder_hidden, spec.decoder_hidden);
    linear("traj.l3", spec.decoder_hidden, kFutureSteps * 2);
  }
  if (spec.task != Task::TP) {
    linear("action.l1", dec_in, spec.decoder_hidden);
    linear("action.l2", spec.decoder_hidden, spec.decoder_hidden);
    linear("action.l3", spec.decoder_hidden, kFutureSteps * spec.action_vocab_size);
  }
  return model;
}

template <typename T>
std::size_t Model<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

template <typename T>
const num::Parameter<T>& Model<T>::param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw PreconditionError("no parameter named '" + std::string(name) + "'");
}

// ---- forward ----

template <typename T>
ForwardPass<T> Model<T>::forward(num::Tape<T>& tape, const Batch<T>& batch) const {
  using Id = typename num::Tape<T>::Id;
  const std::size_t B = batch.size;
  if (B == 0) throw PreconditionError("forward: empty batch");

  ForwardPass<T> out;
  out.param_ids.reserve(params.size());
  for (const auto& p : params) out.param_ids.push_back(tape.leaf(p.value));
  auto pid = [&](std::string_view name) -> Id {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name == name) return out.param_ids[i];
    }
    throw PreconditionError("forward: missing parameter '" + std::string(name) + "'");
  };
  auto dense = [&](Id x, const std::string& stem) {
    return tape.add_rowvec(tape.matmul(x, pid(stem + ".W")), pid(stem + ".b"));
  };

  // Input embedding per timestep, then the position table tiled per item.
  Id x = dense(tape.constant(batch.inputs), "embed.l1");
  x = tape.relu(x);
  x = dense(x, "embed.l2");

  num::Tensor<T> pe_tiled({B * kObservedSteps, spec.d_model});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(positional.v.begin(), positional.v.end(),
              pe_tiled.v.begin() +
                  static_cast<std::ptrdiff_t>(b * kObservedSteps * spec.d_model));
  }
  x = tape.add(x, tape.constant(std::move(pe_tiled)));

  for (std::size_t l = 0; l < spec.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    Id q = dense(x, p + ".q");
    Id k = dense(x, p + ".k");
    Id v = dense(x, p + ".v");
    Id att = tape.attention(q, k, v, B, kObservedSteps, spec.heads);
    Id o = dense(att, p + ".o");
    x = tape.layer_norm(tape.add(x, o), pid(p + ".ln1.g"), pid(p + ".ln1.b"),
                        static_cast<T>(kLayerNormEps));
    Id f = tape.relu(dense(x, p + ".ff1"));
    f = dense(f, p + ".ff2");
    x = tape.layer_norm(tape.add(x, f), pid(p + ".ln2.g"), pid(p + ".ln2.b"),
                        static_cast<T>(kLayerNormEps));
  }

  Id z = tape.reshape(x, {B, kObservedSteps * spec.d_model});
  if (spec.use_agent_class) {
    Id emb = tape.embedding_rows(pid("agent.table"), batch.agent_rows);
    z = tape.concat_cols(z, emb);
  }

  if (spec.task != Task::ActionOnly) {
    Id h = tape.relu(dense(z, "traj.l1"));
    h = tape.relu(dense(h, "traj.l2"));
    Id flat_vel = dense(h, "traj.l3");  // [B x 24]
    out.velocities = tape.reshape(flat_vel, {B, kFutureSteps, 2});
    out.positions =
        tape.integrate_time(out.velocities, batch.origins, static_cast<T>(kTimestep));
    out.has_positions = true;
  }
  if (spec.task != Task::TP) {
    Id g = tape.relu(dense(z, "action.l1"));
    g = tape.relu(dense(g, "action.l2"));
    Id logits = dense(g, "action.l3");  // [B x 12*N_A]
    out.action_probs =
        tape.softmax(tape.reshape(logits, {B * kFutureSteps, spec.action_vocab_size}));
    out.has_actions = true;
  }
  return out;
}

// ---- inference helpers ----

std::size_t argmax_lowest(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

num::Tensor<double> integrate(double origin_x, double origin_y,
                              const num::Tensor<double>& velocities, double dt) {
  if (velocities.shape.size() != 2 || velocities.shape[1] != 2)
    throw ShapeError("integrate: expected [L x 2] velocities");
  num::Tensor<double> pos(velocities.shape);
  double px = origin_x, py = origin_y;
  for (std::size_t j = 0; j < velocities.shape[0]; ++j) {
    px += dt * velocities.v[j * 2];
    py += dt * velocities.v[j * 2 + 1];
    pos.v[j * 2] = px;
    pos.v[j * 2 + 1] = py;
  }
  return pos;
}

template <typename T>
std::vector<PredictionOutput> predict(const Model<T>& model,
                                      const std::vector<Tracklet>& tracklets,
                                      const std::vector<std::size_t>& indices,
                                      const Vocabulary& vocab) {
  if (indices.empty()) return {};
  num::Tape<T> tape;
  const Batch<T> batch = make_batch<T>(tracklets, indices, vocab, model.spec);
  const ForwardPass<T> fwd = model.forward(tape, batch);

  const std::size_t B = indices.size();
  const std::size_t na = model.spec.action_vocab_size;
  std::vector<PredictionOutput> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    PredictionOutput& p = out[b];
    if (fwd.has_positions) {
      p.velocities = num::Tensor<double>({kFutureSteps, 2});
      p.positions = num::Tensor<double>({kFutureSteps, 2});
      const auto& vel = tape.value(fwd.velocities);
      const auto& pos = tape.value(fwd.positions);
      for (std::size_t i = 0; i < kFutureSteps * 2; ++i) {
        p.velocities.v[i] = static_cast<double>(vel.v[b * kFutureSteps * 2 + i]);
        p.positions.v[i] = static_cast<double>(pos.v[b * kFutureSteps * 2 + i]);
      }
    }
    if (fwd.has_actions) {
      p.action_probs = num::Tensor<double>({kFutureSteps, na});
      const auto& probs = tape.value(fwd.action_probs);
      for (std::size_t i = 0; i < kFutureSteps * na; ++i)
        p.action_probs->v[i] = static_cast<double>(probs.v[b * kFutureSteps * na + i]);
      p.actions.reserve(kFutureSteps);
      for (std::size_t j = 0; j < kFutureSteps; ++j) {
        const std::size_t idx = argmax_lowest(p.action_probs->data() + j * na, na);
        p.actions.push_back(vocab.actions().at(idx));
      }
    }
  }
  return out;
}

template struct Model<float>;
template struct Model<double>;
template Batch<float> make_batch<float>(const std::vector<Tracklet>&,
                                        const std::vector<std::size_t>&, const Vocabulary&,
                                        const ModelSpec&);
template Batch<double> make_batch<double>(const std::vector<Tracklet>&,
                                          const std::vector<std::size_t>&, const Vocabulary&,
                                          const ModelSpec&);
template std::vector<PredictionOutput> predict<float>(const Model<float>&,
                                                      const std::vector<Tracklet>&,
                                                      const std::vector<std::size_t>&,
                                                      const Vocabulary&);
template std::vector<PredictionOutput> predict<double>(const Model<double>&,
                                                       const std::vector<Tracklet>&,
                                                       const std::vector<std::size_t>&,
                                                       const Vocabulary&);

}  // namespace trackcast::models
