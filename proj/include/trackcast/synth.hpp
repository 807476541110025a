#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trackcast/data_model.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::synth {

// One schedule phase: hold the action for `duration_s`, moving at `speed`
// (0 for static actions) along a heading drawn once per phase.
struct Phase {
  ActionClass action = ActionClass::Walk;
  double duration_s = 1.0;
  double speed = 0.0;
};

struct SynthSpec {
  std::size_t n_trajectories = 16;
  double duration_s = 16.0;
  std::map<AgentClass, double> agent_class_mix;       // weights >= 0, sum 1
  std::map<AgentClass, std::vector<Phase>> templates;  // looped to fill duration
  double noise_std = 0.0;  // meters, added to emitted positions
  std::uint64_t seed = 0;

  // Scenario-2/3 classes with carry/visit schedules; walking speeds near
  // 1.2 m/s, static phases at 0.
  static SynthSpec defaults();
  void validate() const;  // throws SpecError
};

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

// A trajectory's schedule as executed: absolute phase windows with their
// start positions and constant velocities, which makes every position a
// closed-form function of time.
struct ExecPhase {
  ActionClass action = ActionClass::Walk;
  double t_begin = 0.0, t_end = 0.0;
  double x0 = 0.0, y0 = 0.0;  // position at t_begin (noise-free)
  double vx = 0.0, vy = 0.0;
};

struct PhasePlan {
  std::string agent_id;
  AgentClass agent_class = AgentClass::CarrierBox;
  std::vector<ExecPhase> phases;
  double duration_s = 0.0;
  double noise_std = 0.0;
};

struct SynthResult {
  std::vector<Trajectory> trajectories;  // index-aligned with plans
  std::vector<PhasePlan> plans;
};

// Deterministic in spec.seed. Emitted velocities are the exact phase
// velocities (not differenced from the noisy positions).
SynthResult generate(const SynthSpec& spec);

// Noise-free position at time t under the plan.
std::pair<double, double> closed_form_position(const PhasePlan& plan, double t);

// Exact [12 x 2] future positions after the observed window whose last sample
// has the given grid index; evaluation happens on the generator's own time
// grid so the result matches generated states bit for bit. Throws
// PreconditionError for noisy plans or horizons past the plan end.
num::Tensor<double> closed_form_future(const PhasePlan& plan, std::size_t last_observed_sample);

// Same CSV schema ingest reads, velocities included, 17 significant digits.
void emit_csv(const std::vector<Trajectory>& trajectories, std::ostream& out);

}  // namespace trackcast::synth
