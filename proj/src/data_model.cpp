#include "trackcast/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trackcast {

namespace {

constexpr std::array<std::string_view, kNumActionClasses> kActionNames = {
    "Walk",           "DrawCard",       "ObserveCardDraw", "WalkLO",
    "PickBucket",     "WalkBucket",     "DeliverBucket",   "PickBox",
    "WalkBox",        "DeliverBox",     "PickStorageBin",  "WalkStorageBin",
    "DeliverStorageBin", "HRI",
};

constexpr std::array<std::string_view, kNumAgentClasses> kAgentNames = {
    "CarrierBox",       "CarrierBucket",    "CarrierLargeObject", "VisitorsAlone",
    "VisitorsGroup",    "VisitorsAloneHRI", "CarrierStorageBinHRI",
};

}  // namespace

std::string_view to_string(ActionClass a) { return kActionNames[static_cast<int>(a)]; }
std::string_view to_string(AgentClass c) { return kAgentNames[static_cast<int>(c)]; }

std::optional<ActionClass> parse_action(std::string_view name) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (kActionNames[i] == name) return static_cast<ActionClass>(i);
  }
  return std::nullopt;
}

std::optional<AgentClass> parse_agent(std::string_view name) {
  for (std::size_t i = 0; i < kAgentNames.size(); ++i) {
    if (kAgentNames[i] == name) return static_cast<AgentClass>(i);
  }
  return std::nullopt;
}

Vocabulary::Vocabulary(std::vector<ActionClass> actions, std::vector<AgentClass> agent_classes)
    : actions_(std::move(actions)), agent_classes_(std::move(agent_classes)) {
  if (actions_.empty() || agent_classes_.empty()) {
    throw VocabError("vocabulary must not be empty");
  }
  action_index_.fill(-1);
  agent_index_.fill(-1);
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    int& slot = action_index_[static_cast<int>(actions_[i])];
    if (slot >= 0) throw VocabError("duplicate action in vocabulary");
    slot = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < agent_classes_.size(); ++i) {
    int& slot = agent_index_[static_cast<int>(agent_classes_[i])];
    if (slot >= 0) throw VocabError("duplicate agent class in vocabulary");
    slot = static_cast<int>(i);
  }
}

int Vocabulary::index(ActionClass a) const {
  int i = action_index_[static_cast<int>(a)];
  if (i < 0) throw VocabError("action '" + std::string(to_string(a)) + "' not in vocabulary");
  return i;
}

int Vocabulary::index(AgentClass c) const {
  int i = agent_index_[static_cast<int>(c)];
  if (i < 0) throw VocabError("agent class '" + std::string(to_string(c)) + "' not in vocabulary");
  return i;
}

std::string_view to_string(ScenarioSelector s) {
  return s == ScenarioSelector::Full ? "Full" : "Scenarios2and3";
}

std::optional<ScenarioSelector> parse_scenario(std::string_view name) {
  if (name == "Full") return ScenarioSelector::Full;
  if (name == "Scenarios2and3") return ScenarioSelector::Scenarios2and3;
  return std::nullopt;
}

Vocabulary scenario_vocabulary(ScenarioSelector selector) {
  if (selector == ScenarioSelector::Full) {
    std::vector<ActionClass> actions(kNumActionClasses);
    for (std::size_t i = 0; i < kNumActionClasses; ++i) actions[i] = static_cast<ActionClass>(i);
    std::vector<AgentClass> agents(kNumAgentClasses);
    for (std::size_t i = 0; i < kNumAgentClasses; ++i) agents[i] = static_cast<AgentClass>(i);
    return Vocabulary(std::move(actions), std::move(agents));
  }
  // Scenarios 2+3: keep this list order stable, it fixes the one-hot indices.
  return Vocabulary(
      {ActionClass::DrawCard, ActionClass::Walk, ActionClass::WalkLO, ActionClass::PickBucket,
       ActionClass::WalkBucket, ActionClass::DeliverBucket, ActionClass::ObserveCardDraw,
       ActionClass::PickBox, ActionClass::WalkBox, ActionClass::DeliverBox},
      {AgentClass::CarrierBox, AgentClass::CarrierBucket, AgentClass::CarrierLargeObject,
       AgentClass::VisitorsAlone, AgentClass::VisitorsGroup});
}

std::vector<double> one_hot(ActionClass label, const Vocabulary& vocab) {
  std::vector<double> v(vocab.actions().size(), 0.0);
  v[static_cast<std::size_t>(vocab.index(label))] = 1.0;
  return v;
}

std::vector<double> one_hot(AgentClass label, const Vocabulary& vocab) {
  std::vector<double> v(vocab.agent_classes().size(), 0.0);
  v[static_cast<std::size_t>(vocab.index(label))] = 1.0;
  return v;
}

std::vector<std::string> validate_tracklet(const Tracklet& t, const Vocabulary& vocab) {
  std::vector<std::string> violations;
  auto add = [&](const std::string& msg) { violations.push_back(msg); };

  if (t.observed.size() != kObservedSteps) {
    add("observed length " + std::to_string(t.observed.size()) + " != " +
        std::to_string(kObservedSteps));
  }
  if (t.future.size() != kFutureSteps) {
    add("future length " + std::to_string(t.future.size()) + " != " +
        std::to_string(kFutureSteps));
  }

  std::vector<const State*> all;
  all.reserve(t.observed.size() + t.future.size());
  for (const State& s : t.observed) all.push_back(&s);
  for (const State& s : t.future) all.push_back(&s);

  for (std::size_t i = 0; i < all.size(); ++i) {
    const State& s = *all[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
        !std::isfinite(s.vx) || !std::isfinite(s.vy)) {
      add("non-finite state at step " + std::to_string(i));
    }
    if (!vocab.contains(s.action)) {
      add("action '" + std::string(to_string(s.action)) + "' not in vocabulary at step " +
          std::to_string(i));
    }
  }
  for (std::size_t i = 1; i < all.size(); ++i) {
    double dt = all[i]->t - all[i - 1]->t;
    if (dt <= 0.0) {
      add("timestamps not strictly increasing at step " + std::to_string(i));
    } else if (std::abs(dt - kTimestep) > kTimestampTol) {
      std::ostringstream os;
      os << "non-uniform/incorrect timestep " << dt << " at step " << i;
      add(os.str());
    }
  }
  if (!vocab.contains(t.agent_class)) {
    add("agent class '" + std::string(to_string(t.agent_class)) + "' not in vocabulary");
  }
  return violations;
}

}  // namespace trackcast
