#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "test_util.hpp"
#include "trackcast/stats.hpp"

using namespace trackcast;
namespace st = trackcast::stats;

TEST_CASE("accumulator matches direct mean and population std") {
  st::Accumulator acc;
  const std::vector<double> xs{1.0, 2.0, 2.0, 3.0, 7.5, -4.0};
  for (double x : xs) acc.add(x);
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size();  // population convention
  CHECK(acc.n == xs.size());
  CHECK(acc.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(acc.std_dev() == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("accumulator merge equals pooled accumulation") {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> d(-10, 10);
  st::Accumulator left, right, pooled;
  for (int i = 0; i < 100; ++i) {
    double x = d(eng);
    (i < 37 ? left : right).add(x);
    pooled.add(x);
  }
  left.merge(right);
  CHECK(left.n == pooled.n);
  CHECK(left.mean == doctest::Approx(pooled.mean).epsilon(1e-12));
  CHECK(left.std_dev() == doctest::Approx(pooled.std_dev()).epsilon(1e-12));

  // Merging an empty accumulator is a no-op.
  st::Accumulator empty;
  double before = left.mean;
  left.merge(empty);
  CHECK(left.mean == before);
  // Merging into an empty one copies.
  st::Accumulator target;
  target.merge(pooled);
  CHECK(target.mean == doctest::Approx(pooled.mean));
}

TEST_CASE("single sample has zero std") {
  st::Accumulator acc;
  acc.add(3.0);
  CHECK(acc.std_dev() == 0.0);
  CHECK(acc.mean == 3.0);
}

TEST_CASE("action_distribution counts per step") {
  auto walk = testutil::make_cv_tracklet(0, 0, 1, 0, ActionClass::Walk,
                                         AgentClass::VisitorsAlone);
  auto draw = testutil::make_cv_tracklet(5, 5, 0, 0, ActionClass::DrawCard,
                                         AgentClass::VisitorsAlone);
  auto counts = st::action_distribution({walk, draw});
  CHECK(counts[static_cast<std::size_t>(ActionClass::Walk)] == 20);
  CHECK(counts[static_cast<std::size_t>(ActionClass::DrawCard)] == 20);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  CHECK(total == 40);
}

TEST_CASE("constant-velocity tracklet has exact speed and zero acceleration") {
  auto tk = testutil::make_cv_tracklet(1.0, -2.0, 0.6, -0.8, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  auto rows = st::per_action_kinematics({tk});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].action == ActionClass::Walk);
  CHECK(rows[0].n == 20);
  CHECK(rows[0].speed_mean == doctest::Approx(1.0).epsilon(1e-12));  // hypot(.6,.8)
  CHECK(rows[0].speed_std == doctest::Approx(0.0));
  CHECK(rows[0].accel_mean == doctest::Approx(0.0));
  CHECK(rows[0].accel_std == doctest::Approx(0.0));
  // 19 intervals of 0.4 s at 1 m/s.
  CHECK(rows[0].dist_mean == doctest::Approx(19 * 0.4).epsilon(1e-9));
  CHECK(rows[0].dist_std == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("stationary tracklet has zero speed and distance") {
  auto tk = testutil::make_cv_tracklet(3, 3, 0, 0, ActionClass::PickBox,
                                       AgentClass::CarrierBox);
  auto rows = st::per_action_kinematics({tk});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].speed_mean == 0.0);
  CHECK(rows[0].dist_mean == 0.0);
}

TEST_CASE("global kinematics pools every step") {
  auto fast = testutil::make_cv_tracklet(0, 0, 1, 0, ActionClass::Walk,
                                         AgentClass::VisitorsAlone);
  auto still = testutil::make_cv_tracklet(9, 9, 0, 0, ActionClass::PickBox,
                                          AgentClass::CarrierBox);
  auto g = st::global_kinematics({fast, still});
  CHECK(g.n == 40);
  // Half the steps at speed 1, half at 0.
  CHECK(g.speed_mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.speed_std == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("per-action rows agree with a manual recomputation") {
  // Mixed-action tracklet: first half Walk, second half PickBox.
  auto tk = testutil::make_cv_tracklet(0, 0, 1.2, 0, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  for (std::size_t i = 10; i < 20; ++i) {
    tk.future[i - 8].action = ActionClass::PickBox;
  }
  auto rows = st::per_action_kinematics({tk});
  REQUIRE(rows.size() == 2);

  std::size_t n_walk = 0, n_pick = 0;
  for (const auto& r : rows) {
    if (r.action == ActionClass::Walk) n_walk = r.n;
    if (r.action == ActionClass::PickBox) n_pick = r.n;
  }
  CHECK(n_walk == 10);
  CHECK(n_pick == 10);

  // Per-action distance attribution splits the path.
  for (const auto& r : rows) {
    if (r.action == ActionClass::Walk) {
      // Steps 0..9 start intervals 0..9, covering 10 intervals: the interval
      // starting at the last Walk step still belongs to Walk.
      CHECK(r.dist_mean == doctest::Approx(10 * 0.4 * 1.2).epsilon(1e-9));
    } else {
      CHECK(r.dist_mean == doctest::Approx(9 * 0.4 * 1.2).epsilon(1e-9));
    }
  }

  // Whole-segment attribution hands both actions the full path length.
  auto whole = st::per_action_kinematics({tk}, st::DistanceAttribution::WholeSegment);
  for (const auto& r : whole) {
    CHECK(r.dist_mean == doctest::Approx(19 * 0.4 * 1.2).epsilon(1e-9));
  }
}

TEST_CASE("translation leaves kinematics unchanged") {
  std::mt19937_64 eng(11);
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  std::vector<Tracklet> base, moved;
  for (int i = 0; i < 6; ++i) {
    auto tk = testutil::make_random_tracklet(eng, vocab, "t" + std::to_string(i));
    base.push_back(tk);
    for (auto* part : {&tk.observed, &tk.future}) {
      for (auto& s : *part) {
        s.x += 120.0;
        s.y -= 47.0;
      }
    }
    moved.push_back(tk);
  }
  auto a = st::per_action_kinematics(base);
  auto b = st::per_action_kinematics(moved);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].n == b[i].n);
    // Speeds/accels come from stored velocities: identical. Distances are
    // recomputed from shifted positions: equal up to cancellation error.
    CHECK(a[i].speed_mean == b[i].speed_mean);
    CHECK(a[i].accel_mean == b[i].accel_mean);
    CHECK(a[i].dist_mean == doctest::Approx(b[i].dist_mean).epsilon(1e-9));
  }
}

TEST_CASE("per-action distances never exceed the segment path length") {
  std::mt19937_64 eng(13);
  auto vocab = scenario_vocabulary(ScenarioSelector::Scenarios2and3);
  std::vector<Tracklet> tks;
  for (int i = 0; i < 10; ++i) {
    tks.push_back(testutil::make_random_tracklet(eng, vocab, "t" + std::to_string(i)));
  }
  // Sum of per-action attributed distance = total path length, so each
  // per-action mean is bounded by the max whole-segment distance.
  auto per = st::per_action_kinematics(tks, st::DistanceAttribution::PerAction);
  auto whole = st::per_action_kinematics(tks, st::DistanceAttribution::WholeSegment);
  double max_whole = 0.0;
  for (const auto& r : whole) max_whole = std::max(max_whole, r.dist_mean + 3 * r.dist_std);
  for (const auto& r : per) {
    CHECK(r.dist_mean <= max_whole + 1e-9);
  }
}

TEST_CASE("kinematics csv has the expected header and a Global row") {
  auto tk = testutil::make_cv_tracklet(0, 0, 1, 0, ActionClass::Walk,
                                       AgentClass::VisitorsAlone);
  auto rows = st::per_action_kinematics({tk});
  auto g = st::global_kinematics({tk});
  auto csv = st::kinematics_csv(rows, g);
  std::istringstream is(csv);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "action,n,speed_mean,speed_std,accel_mean,accel_std,dist_mean,dist_std");
  bool saw_walk = false, saw_global = false;
  while (std::getline(is, line)) {
    if (line.rfind("Walk,", 0) == 0) saw_walk = true;
    if (line.rfind("Global,", 0) == 0) saw_global = true;
  }
  CHECK(saw_walk);
  CHECK(saw_global);
}

TEST_CASE("distribution json sorts by descending count") {
  std::array<std::size_t, kNumActionClasses> counts{};
  counts[static_cast<std::size_t>(ActionClass::Walk)] = 5;
  counts[static_cast<std::size_t>(ActionClass::DrawCard)] = 11;
  counts[static_cast<std::size_t>(ActionClass::PickBox)] = 7;
  auto json = st::distribution_json(counts);
  auto pos_draw = json.find("DrawCard");
  auto pos_pick = json.find("PickBox");
  auto pos_walk = json.find("Walk\"");
  REQUIRE(pos_draw != std::string::npos);
  REQUIRE(pos_pick != std::string::npos);
  REQUIRE(pos_walk != std::string::npos);
  CHECK(pos_draw < pos_pick);
  CHECK(pos_pick < pos_walk);
  // Zero-count actions still appear, after every positive count.
  auto pos_zero = json.find("DeliverBox");
  REQUIRE(pos_zero != std::string::npos);
  CHECK(pos_walk < pos_zero);
}
