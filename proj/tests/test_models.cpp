#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <vector>

#include "test_util.hpp"
#include "trackcast/errors.hpp"
#include "trackcast/models.hpp"

using namespace trackcast;
namespace md = trackcast::models;
namespace num = trackcast::num;

namespace {

// Small widths keep forward passes cheap where exact sizes don't matter.
md::ModelSpec tiny_spec(md::Task task) {
  md::ModelSpec s;
  s.task = task;
  s.heads = 2;
  s.d_model = 8;
  s.d_ff = 16;
  s.embed_hidden = 8;
  s.decoder_hidden = 16;
  s.agent_embed_dim = 4;
  return s;
}

std::vector<Tracklet> sample_tracklets(std::uint64_t seed, int n) {
  std::mt19937_64 eng(seed);
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  std::vector<Tracklet> tks;
  for (int i = 0; i < n; ++i) {
    tks.push_back(testutil::make_random_tracklet(eng, vocab, "t" + std::to_string(i)));
  }
  return tks;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

TEST_CASE("task names round-trip") {
  CHECK(md::parse_task(md::to_string(md::Task::TP)) == md::Task::TP);
  CHECK(md::parse_task(md::to_string(md::Task::MTL)) == md::Task::MTL);
  CHECK(md::parse_task(md::to_string(md::Task::ActionOnly)) == md::Task::ActionOnly);
  CHECK_THROWS_AS(md::parse_task("frisbee"), SpecError);
}

TEST_CASE("model spec validation") {
  md::ModelSpec s;
  s.validate();  // defaults are fine
  SUBCASE("d_model must divide into heads") {
    s.d_model = 30;
    s.heads = 4;
    CHECK_THROWS_AS(s.validate(), SpecError);
  }
  SUBCASE("zero widths rejected") {
    s.d_ff = 0;
    CHECK_THROWS_AS(s.validate(), SpecError);
  }
  SUBCASE("lambda must be finite and non-negative") {
    s.lambda = -0.5;
    CHECK_THROWS_AS(s.validate(), SpecError);
    s.lambda = std::nan("");
    CHECK_THROWS_AS(s.validate(), SpecError);
  }
  SUBCASE("action vocab needs at least two entries") {
    s.action_vocab_size = 1;
    CHECK_THROWS_AS(s.validate(), SpecError);
  }
}

TEST_CASE("model spec json round-trips and rejects unknown keys") {
  md::ModelSpec s;
  s.use_agent_class = true;
  s.task = md::Task::MTL;
  s.lambda = 0.25;
  s.d_model = 16;
  auto j = md::model_spec_to_json(s);
  auto back = md::model_spec_from_json(j);
  CHECK(back.use_agent_class == s.use_agent_class);
  CHECK(back.task == s.task);
  CHECK(back.lambda == s.lambda);
  CHECK(back.d_model == s.d_model);

  nlohmann::json partial = {{"d_ff", 32}};
  auto sparse = md::model_spec_from_json(partial);
  CHECK(sparse.d_ff == 32);
  CHECK(sparse.d_model == md::ModelSpec{}.d_model);  // default kept

  nlohmann::json bad = {{"d_modle", 16}};
  CHECK_THROWS_AS(md::model_spec_from_json(bad), SpecError);
}

TEST_CASE("parameter counts hit the published budget") {
  // Hand-computed totals for the default widths (embed 2400, encoder block
  // 8544, trajectory head 22168 for the baseline).
  md::ModelSpec base;  // no cues
  CHECK(md::Model<float>::build(base, 0).param_count() == 33112);

  md::ModelSpec act = base;
  act.use_actions_in_input = true;
  CHECK(md::Model<float>::build(act, 0).param_count() == 33752);

  md::ModelSpec agt = base;
  agt.use_agent_class = true;
  CHECK(md::Model<float>::build(agt, 0).param_count() == 34216);

  md::ModelSpec both = base;
  both.use_actions_in_input = true;
  both.use_agent_class = true;
  CHECK(md::Model<float>::build(both, 0).param_count() == 34856);

  // All four sit inside the 36.7K +-15% budget, in strict cue order.
  const double lo = 36700 * 0.85, hi = 36700 * 1.15;
  for (std::size_t n : {33112u, 33752u, 34216u, 34856u}) {
    CHECK(n >= lo);
    CHECK(n <= hi);
  }
  CHECK(md::Model<float>::build(both, 0).param_count() >
        md::Model<float>::build(agt, 0).param_count());
  CHECK(md::Model<float>::build(agt, 0).param_count() >
        md::Model<float>::build(act, 0).param_count());
  CHECK(md::Model<float>::build(act, 0).param_count() >
        md::Model<float>::build(base, 0).param_count());
}

TEST_CASE("the action head rides on top of the trajectory decoder") {
  auto tp = tiny_spec(md::Task::TP);
  auto mtl = tiny_spec(md::Task::MTL);
  auto m_tp = md::Model<float>::build(tp, 1);
  auto m_mtl = md::Model<float>::build(mtl, 1);
  CHECK(m_mtl.param_count() > m_tp.param_count());
  CHECK_THROWS_AS((void)m_tp.param("action.l1.W"), PreconditionError);
  CHECK(m_mtl.param("action.l3.W").value.cols() == kFutureSteps * mtl.action_vocab_size);
}

TEST_CASE("build is deterministic in the seed and shares draws across dtypes") {
  auto spec = tiny_spec(md::Task::MTL);
  auto a = md::Model<double>::build(spec, 7);
  auto b = md::Model<double>::build(spec, 7);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].name == b.params[i].name);
    CHECK(a.params[i].value.v == b.params[i].value.v);
  }
  auto c = md::Model<double>::build(spec, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].value.v != c.params[i].value.v) any_diff = true;
  }
  CHECK(any_diff);

  // The float model is the double draw cast down, weight by weight.
  auto f = md::Model<float>::build(spec, 7);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    for (std::size_t j = 0; j < a.params[i].value.size(); ++j) {
      CHECK(f.params[i].value.v[j] == static_cast<float>(a.params[i].value.v[j]));
    }
  }

  // Layer norm gains start at one, biases at zero.
  const auto& gain = a.param("enc0.ln1.g");
  for (double x : gain.value.v) CHECK(x == 1.0);
  const auto& bias = a.param("enc0.ln1.b");
  for (double x : bias.value.v) CHECK(x == 0.0);
}

TEST_CASE("make_batch normalizes positions to the last observed point") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec = tiny_spec(md::Task::TP);
  auto tk = testutil::make_cv_tracklet(5.0, -3.0, 1.0, 0.5, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  auto batch = md::make_batch<double>({tk}, {0}, vocab, spec);
  CHECK(batch.size == 1);
  REQUIRE(batch.inputs.shape == num::Shape{8, 4});
  // Last observed row has relative position (0,0) and raw velocity.
  CHECK(batch.inputs.v[7 * 4 + 0] == 0.0);
  CHECK(batch.inputs.v[7 * 4 + 1] == 0.0);
  CHECK(batch.inputs.v[7 * 4 + 2] == 1.0);
  CHECK(batch.inputs.v[7 * 4 + 3] == 0.5);
  // Origins stay absolute.
  CHECK(batch.origins.v[0] == tk.observed.back().x);
  CHECK(batch.origins.v[1] == tk.observed.back().y);
  // True positions stay absolute too.
  CHECK(batch.true_positions.v[0] == tk.future[0].x);

  // With actions in the input the one-hot rides along.
  auto spec_a = tiny_spec(md::Task::TP);
  spec_a.use_actions_in_input = true;
  auto wide = md::make_batch<double>({tk}, {0}, vocab, spec_a);
  REQUIRE(wide.inputs.shape == num::Shape{8, 14});
  CHECK(wide.inputs.v[0 * 14 + 4 + vocab.index(ActionClass::Walk)] == 1.0);

  // Action targets appear for MTL.
  auto spec_m = tiny_spec(md::Task::MTL);
  auto mb = md::make_batch<double>({tk}, {0}, vocab, spec_m);
  REQUIRE(mb.true_action_index.size() == 12);
  CHECK(mb.true_action_index[0] == vocab.index(ActionClass::Walk));
  CHECK(mb.true_action_onehot.v[vocab.index(ActionClass::Walk)] == 1.0);
}

TEST_CASE("make_batch rejects vocab mismatch and bad windows") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec = tiny_spec(md::Task::TP);
  spec.action_vocab_size = 14;  // disagrees with the 10-action vocabulary
  spec.use_actions_in_input = true;
  auto tk = testutil::make_cv_tracklet(0, 0, 1, 0, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  CHECK_THROWS_AS(md::make_batch<double>({tk}, {0}, vocab, spec), VocabError);

  auto good_spec = tiny_spec(md::Task::TP);
  auto bad = tk;
  bad.observed.pop_back();
  CHECK_THROWS_AS(md::make_batch<double>({bad}, {0}, vocab, good_spec), PreconditionError);
}

TEST_CASE("forward produces the right shapes and normalized action probs") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec = tiny_spec(md::Task::MTL);
  spec.use_agent_class = true;
  spec.use_actions_in_input = true;
  auto model = md::Model<float>::build(spec, 3);
  auto tks = sample_tracklets(4, 5);
  auto batch = md::make_batch<float>(tks, iota_indices(5), vocab, spec);

  num::Tape<float> tape;
  auto fwd = model.forward(tape, batch);
  REQUIRE(fwd.has_positions);
  REQUIRE(fwd.has_actions);
  CHECK(tape.value(fwd.velocities).shape == num::Shape{5, 12, 2});
  CHECK(tape.value(fwd.positions).shape == num::Shape{5, 12, 2});
  CHECK(tape.value(fwd.action_probs).shape == num::Shape{5 * 12, 10});
  CHECK(fwd.param_ids.size() == model.params.size());

  // Rows of the action head sum to one.
  const auto& probs = tape.value(fwd.action_probs);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    float sum = 0.0f;
    for (std::size_t c = 0; c < probs.cols(); ++c) sum += probs.v[r * probs.cols() + c];
    CHECK(std::abs(sum - 1.0f) < 1e-5f);
  }

  // Positions equal origin + cumulative integration of velocities.
  const auto& vel = tape.value(fwd.velocities);
  const auto& pos = tape.value(fwd.positions);
  for (std::size_t b = 0; b < 5; ++b) {
    double px = batch.origins.v[b * 2], py = batch.origins.v[b * 2 + 1];
    for (std::size_t j = 0; j < 12; ++j) {
      px += kTimestep * vel.v[(b * 12 + j) * 2];
      py += kTimestep * vel.v[(b * 12 + j) * 2 + 1];
      CHECK(pos.v[(b * 12 + j) * 2] == doctest::Approx(px).epsilon(1e-5));
      CHECK(pos.v[(b * 12 + j) * 2 + 1] == doctest::Approx(py).epsilon(1e-5));
    }
  }
}

TEST_CASE("per-item outputs do not depend on batch composition") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec = tiny_spec(md::Task::MTL);
  auto model = md::Model<double>::build(spec, 9);
  auto tks = sample_tracklets(10, 6);

  // Forward the full batch, then item 3 alone; rows must match bitwise.
  num::Tape<double> tape_all;
  auto batch_all = md::make_batch<double>(tks, iota_indices(6), vocab, spec);
  auto fwd_all = model.forward(tape_all, batch_all);

  num::Tape<double> tape_one;
  auto batch_one = md::make_batch<double>(tks, {3}, vocab, spec);
  auto fwd_one = model.forward(tape_one, batch_one);

  const auto& va = tape_all.value(fwd_all.velocities);
  const auto& vo = tape_one.value(fwd_one.velocities);
  CHECK(std::memcmp(&va.v[3 * 24], vo.v.data(), 24 * sizeof(double)) == 0);
  const auto& pa = tape_all.value(fwd_all.action_probs);
  const auto& po = tape_one.value(fwd_one.action_probs);
  CHECK(std::memcmp(&pa.v[3 * 12 * 10], po.v.data(), 120 * sizeof(double)) == 0);
}

TEST_CASE("translating a tracklet translates its prediction") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec = tiny_spec(md::Task::TP);
  auto model = md::Model<double>::build(spec, 11);

  // Positions on a dyadic grid and a power-of-two / integer shift, so every
  // origin-relative input is bitwise unchanged by the translation.
  auto tk = testutil::make_cv_tracklet(0.0, 0.0, 0.5, 0.25, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  std::size_t step = 0;
  for (auto* part : {&tk.observed, &tk.future}) {
    for (auto& s : *part) {
      s.x = 0.25 * static_cast<double>(step);
      s.y = -0.5 * static_cast<double>(step);
      ++step;
    }
  }
  auto moved = tk;
  for (auto* part : {&moved.observed, &moved.future}) {
    for (auto& s : *part) {
      s.x += 16.0;
      s.y -= 3.0;
    }
  }

  auto out_base = md::predict(model, {tk}, {0}, vocab);
  auto out_moved = md::predict(model, {moved}, {0}, vocab);
  REQUIRE(out_base.size() == 1);
  REQUIRE(out_moved.size() == 1);
  // Velocities are bitwise identical; positions shift by the translation.
  CHECK(out_base[0].velocities.v == out_moved[0].velocities.v);
  for (std::size_t j = 0; j < 12; ++j) {
    CHECK(out_moved[0].positions.v[j * 2] ==
          doctest::Approx(out_base[0].positions.v[j * 2] + 16.0).epsilon(1e-9));
    CHECK(out_moved[0].positions.v[j * 2 + 1] ==
          doctest::Approx(out_base[0].positions.v[j * 2 + 1] - 3.0).epsilon(1e-9));
  }
}

TEST_CASE("argmax resolves ties to the lowest index") {
  const double row1[] = {0.1, 0.5, 0.5, 0.2};
  CHECK(md::argmax_lowest(row1, 4) == 1);
  const double row2[] = {0.7, 0.1, 0.7};
  CHECK(md::argmax_lowest(row2, 3) == 0);
  const double row3[] = {0.25, 0.25, 0.25, 0.25};
  CHECK(md::argmax_lowest(row3, 4) == 0);
}

TEST_CASE("integrate accumulates velocity rows") {
  num::Tensor<double> vel({3, 2}, {1.0, 0.0, 1.0, 0.0, -2.0, 4.0});
  auto pos = md::integrate(10.0, 20.0, vel, 0.5);
  REQUIRE(pos.shape == num::Shape{3, 2});
  CHECK(pos.v[0] == doctest::Approx(10.5));
  CHECK(pos.v[2] == doctest::Approx(11.0));
  CHECK(pos.v[4] == doctest::Approx(10.0));
  CHECK(pos.v[5] == doctest::Approx(22.0));
}

TEST_CASE("predict returns actions only for action-capable tasks") {
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto tks = sample_tracklets(21, 3);

  auto tp_model = md::Model<float>::build(tiny_spec(md::Task::TP), 2);
  auto tp_out = md::predict(tp_model, tks, {0, 2}, vocab);
  REQUIRE(tp_out.size() == 2);
  CHECK(!tp_out[0].action_probs.has_value());
  CHECK(tp_out[0].actions.empty());
  CHECK(tp_out[0].velocities.shape == num::Shape{12, 2});

  auto mtl_model = md::Model<float>::build(tiny_spec(md::Task::MTL), 2);
  auto mtl_out = md::predict(mtl_model, tks, {1}, vocab);
  REQUIRE(mtl_out.size() == 1);
  REQUIRE(mtl_out[0].action_probs.has_value());
  CHECK(mtl_out[0].action_probs->shape == num::Shape{12, 10});
  REQUIRE(mtl_out[0].actions.size() == 12);
  for (auto a : mtl_out[0].actions) {
    CHECK(vocab.contains(a));
  }
}

TEST_CASE("lambda zero leaves shared gradients bitwise unchanged") {
  // The action head contributes exactly +-0.0 to every shared parameter's
  // gradient when lambda is zero, which cannot flip any accumulated value.
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  auto spec0 = tiny_spec(md::Task::MTL);
  spec0.lambda = 0.0;
  auto model = md::Model<double>::build(spec0, 13);
  auto tks = sample_tracklets(33, 4);
  auto batch = md::make_batch<double>(tks, iota_indices(4), vocab, spec0);

  // Run A: full MTL loss with lambda = 0.
  num::Tape<double> tape_a;
  auto fwd_a = model.forward(tape_a, batch);
  REQUIRE(fwd_a.has_actions);
  // Build sum of squared position error plus lambda * cross entropy the same
  // way the trainer does.
  auto diff_a = tape_a.sub(fwd_a.positions, tape_a.constant(batch.true_positions));
  auto sq_a = tape_a.mul(diff_a, diff_a);
  auto tp_a = tape_a.sum_all(sq_a, 1.0 / (4.0 * 12.0));
  auto ce_a = tape_a.cross_entropy_probs(fwd_a.action_probs, batch.true_action_onehot,
                                         1.0 / (4.0 * 12.0), 1e-12);
  auto loss_a = tape_a.add(tp_a, tape_a.scale(ce_a, 0.0));
  tape_a.backward(loss_a);

  // Run B: the position term alone on an identical forward graph.
  num::Tape<double> tape_b;
  auto fwd_b = model.forward(tape_b, batch);
  auto diff_b = tape_b.sub(fwd_b.positions, tape_b.constant(batch.true_positions));
  auto sq_b = tape_b.mul(diff_b, diff_b);
  auto loss_b = tape_b.sum_all(sq_b, 1.0 / (4.0 * 12.0));
  tape_b.backward(loss_b);

  REQUIRE(fwd_a.param_ids.size() == fwd_b.param_ids.size());
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (model.params[i].name.rfind("action.", 0) == 0) continue;  // head-only
    const auto& ga = tape_a.grad(fwd_a.param_ids[i]);
    const auto& gb = tape_b.grad(fwd_b.param_ids[i]);
    REQUIRE(ga.size() == gb.size());
    CHECK(std::memcmp(ga.v.data(), gb.v.data(), ga.size() * sizeof(double)) == 0);
  }
}
