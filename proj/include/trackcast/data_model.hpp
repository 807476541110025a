#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trackcast/errors.hpp"

namespace trackcast {

// Fixed sampling grid shared by the whole pipeline: 8 observed + 12 future
// steps at 0.4 s each (3.2 s observed, 4.8 s horizon). The step is a named
// constant; only synthetic-experiment configs may override it.
inline constexpr double kTimestep = 0.4;
inline constexpr std::size_t kObservedSteps = 8;
inline constexpr std::size_t kFutureSteps = 12;
inline constexpr std::size_t kTrackletSteps = kObservedSteps + kFutureSteps;
inline constexpr double kTimestampTol = 1e-6;

// Per-timestep activity labels, index 0..13 in this declaration order.
enum class ActionClass : std::uint8_t {
  Walk = 0,
  DrawCard,
  ObserveCardDraw,
  WalkLO,
  PickBucket,
  WalkBucket,
  DeliverBucket,
  PickBox,
  WalkBox,
  DeliverBox,
  PickStorageBin,
  WalkStorageBin,
  DeliverStorageBin,
  HRI,
};
inline constexpr std::size_t kNumActionClasses = 14;

// Whole-recording participant roles, index 0..6 in this declaration order.
enum class AgentClass : std::uint8_t {
  CarrierBox = 0,
  CarrierBucket,
  CarrierLargeObject,
  VisitorsAlone,
  VisitorsGroup,
  VisitorsAloneHRI,
  CarrierStorageBinHRI,
};
inline constexpr std::size_t kNumAgentClasses = 7;

std::string_view to_string(ActionClass a);
std::string_view to_string(AgentClass c);
std::optional<ActionClass> parse_action(std::string_view name);
std::optional<AgentClass> parse_agent(std::string_view name);

struct State {
  double t = 0.0;   // seconds
  double x = 0.0;   // meters
  double y = 0.0;   // meters
  double vx = 0.0;  // meters/second
  double vy = 0.0;  // meters/second
  ActionClass action = ActionClass::Walk;
};

struct Trajectory {
  std::string agent_id;
  AgentClass agent_class = AgentClass::CarrierBox;
  std::vector<State> states;  // time-ordered
  std::string scenario_tag;
  // Provenance key for grouped fold assignment. parse_csv sets it to
  // agent_id; gap splitting appends "#<n>" per segment.
  std::string id;
};

// The unit of training and evaluation: 20 consecutive resampled states.
struct Tracklet {
  std::string agent_id;
  AgentClass agent_class = AgentClass::CarrierBox;
  std::vector<State> observed;  // 8 states
  std::vector<State> future;    // 12 states
  std::string source_trajectory_id;
};

// Ordered label subsets; the stored order defines the one-hot index.
class Vocabulary {
 public:
  Vocabulary(std::vector<ActionClass> actions, std::vector<AgentClass> agent_classes);

  const std::vector<ActionClass>& actions() const { return actions_; }
  const std::vector<AgentClass>& agent_classes() const { return agent_classes_; }

  bool contains(ActionClass a) const { return action_index_[static_cast<int>(a)] >= 0; }
  bool contains(AgentClass c) const { return agent_index_[static_cast<int>(c)] >= 0; }

  // Throws VocabError for labels outside the vocabulary.
  int index(ActionClass a) const;
  int index(AgentClass c) const;

 private:
  std::vector<ActionClass> actions_;
  std::vector<AgentClass> agent_classes_;
  std::array<int, kNumActionClasses> action_index_;
  std::array<int, kNumAgentClasses> agent_index_;
};

enum class ScenarioSelector { Full, Scenarios2and3 };

std::string_view to_string(ScenarioSelector s);
std::optional<ScenarioSelector> parse_scenario(std::string_view name);

// Full: all 14 actions / 7 agent classes. Scenarios2and3: the 10 actions and
// 5 agent classes present in scenarios 2 and 3, in a fixed order that pins
// the one-hot indices.
Vocabulary scenario_vocabulary(ScenarioSelector selector);

std::vector<double> one_hot(ActionClass label, const Vocabulary& vocab);
std::vector<double> one_hot(AgentClass label, const Vocabulary& vocab);

// Empty result iff all Tracklet invariants hold and every label is in vocab.
std::vector<std::string> validate_tracklet(const Tracklet& t, const Vocabulary& vocab);

}  // namespace trackcast
