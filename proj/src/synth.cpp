#include "trackcast/synth.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/rng.hpp"

namespace trackcast::synth {

SynthSpec SynthSpec::defaults() {
  SynthSpec s;
  const double w = 1.0 / 5.0;
  s.agent_class_mix = {{AgentClass::CarrierBox, w},
                       {AgentClass::CarrierBucket, w},
                       {AgentClass::CarrierLargeObject, w},
                       {AgentClass::VisitorsAlone, w},
                       {AgentClass::VisitorsGroup, w}};
  s.templates[AgentClass::CarrierBox] = {{ActionClass::PickBox, 2.0, 0.0},
                                         {ActionClass::WalkBox, 4.0, 1.0},
                                         {ActionClass::DeliverBox, 2.0, 0.0}};
  s.templates[AgentClass::CarrierBucket] = {{ActionClass::PickBucket, 2.0, 0.0},
                                            {ActionClass::WalkBucket, 4.0, 1.1},
                                            {ActionClass::DeliverBucket, 2.0, 0.0}};
  s.templates[AgentClass::CarrierLargeObject] = {{ActionClass::Walk, 2.0, 1.2},
                                                 {ActionClass::WalkLO, 6.0, 0.8}};
  s.templates[AgentClass::VisitorsAlone] = {{ActionClass::Walk, 4.0, 1.2},
                                            {ActionClass::DrawCard, 2.0, 0.0},
                                            {ActionClass::Walk, 2.0, 1.2}};
  s.templates[AgentClass::VisitorsGroup] = {{ActionClass::Walk, 4.0, 1.1},
                                            {ActionClass::ObserveCardDraw, 2.0, 0.0},
                                            {ActionClass::Walk, 2.0, 1.1}};
  return s;
}

void SynthSpec::validate() const {
  if (n_trajectories == 0) throw SpecError("synth: n_trajectories must be >= 1");
  if (!(duration_s > 0.0)) throw SpecError("synth: duration_s must be positive");
  if (!(noise_std >= 0.0)) throw SpecError("synth: noise_std must be >= 0");
  if (agent_class_mix.empty()) throw SpecError("synth: agent_class_mix is empty");
  double total = 0.0;
  for (const auto& [cls, w] : agent_class_mix) {
    if (!(w >= 0.0)) throw SpecError("synth: negative weight for " + std::string(to_string(cls)));
    total += w;
    if (!templates.count(cls) && w > 0.0)
      throw SpecError("synth: no template for weighted class " + std::string(to_string(cls)));
  }
  if (std::abs(total - 1.0) > 1e-9) throw SpecError("synth: class weights must sum to 1");
  for (const auto& [cls, phases] : templates) {
    if (phases.empty())
      throw SpecError("synth: empty template for " + std::string(to_string(cls)));
    for (const auto& p : phases) {
      if (!(p.duration_s > 0.0)) throw SpecError("synth: phase durations must be positive");
      if (!(p.speed >= 0.0)) throw SpecError("synth: phase speeds must be >= 0");
    }
  }
}

nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [cls, w] : s.agent_class_mix) mix[std::string(to_string(cls))] = w;
  nlohmann::json tpl = nlohmann::json::object();
  for (const auto& [cls, phases] : s.templates) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : phases) {
      arr.push_back({{"action", std::string(to_string(p.action))},
                     {"duration_s", p.duration_s},
                     {"speed", p.speed}});
    }
    tpl[std::string(to_string(cls))] = arr;
  }
  return nlohmann::json{{"n_trajectories", s.n_trajectories}, {"duration_s", s.duration_s},
                        {"agent_class_mix", mix},             {"templates", tpl},
                        {"noise_std", s.noise_std},           {"seed", s.seed}};
}

namespace {

AgentClass parse_agent_or_throw(const std::string& name) {
  const auto cls = parse_agent(name);
  if (!cls) throw SpecError("synth config: unknown agent class '" + name + "'");
  return *cls;
}

}  // namespace

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("synth config must be a JSON object");
  SynthSpec s = SynthSpec::defaults();
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "n_trajectories") s.n_trajectories = val.get<std::size_t>();
      else if (key == "duration_s") s.duration_s = val.get<double>();
      else if (key == "noise_std") s.noise_std = val.get<double>();
      else if (key == "seed") s.seed = val.get<std::uint64_t>();
      else if (key == "agent_class_mix") {
        s.agent_class_mix.clear();
        for (const auto& [name, w] : val.items())
          s.agent_class_mix[parse_agent_or_throw(name)] = w.get<double>();
      } else if (key == "templates") {
        s.templates.clear();
        for (const auto& [name, arr] : val.items()) {
          std::vector<Phase> phases;
          for (const auto& pj : arr) {
            Phase p;
            const std::string action_name = pj.at("action").get<std::string>();
            const auto action = parse_action(action_name);
            if (!action) throw SpecError("synth config: unknown action '" + action_name + "'");
            p.action = *action;
            p.duration_s = pj.at("duration_s").get<double>();
            p.speed = pj.at("speed").get<double>();
            phases.push_back(p);
          }
          s.templates[parse_agent_or_throw(name)] = std::move(phases);
        }
      } else {
        throw SpecError("synth config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw SpecError("synth config: bad value for '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  SynthResult result;
  result.trajectories.reserve(spec.n_trajectories);
  result.plans.reserve(spec.n_trajectories);

  for (std::size_t i = 0; i < spec.n_trajectories; ++i) {
    num::Rng rng(num::derive_seed(spec.seed, "traj", i));

    // Class pick by cumulative weight, in enum order for determinism; the
    // last weighted class absorbs any 1-ulp shortfall in the weight sum.
    const double u = rng.uniform();
    AgentClass cls = spec.agent_class_mix.begin()->first;
    double cum = 0.0;
    bool picked = false;
    for (const auto& [c, w] : spec.agent_class_mix) {
      if (w <= 0.0) continue;
      cls = c;
      cum += w;
      if (u < cum) {
        picked = true;
        break;
      }
    }
    (void)picked;

    PhasePlan plan;
    plan.agent_class = cls;
    plan.duration_s = spec.duration_s;
    plan.noise_std = spec.noise_std;
    {
      std::ostringstream id;
      id << "synth" << std::setw(4) << std::setfill('0') << i;
      plan.agent_id = id.str();
    }

    double x = rng.uniform(-10.0, 10.0);
    double y = rng.uniform(-10.0, 10.0);
    double t = 0.0;
    const auto& tpl = spec.templates.at(cls);
    std::size_t tpl_at = 0;
    while (t < spec.duration_s) {
      const Phase& ph = tpl[tpl_at];
      ExecPhase ep;
      ep.action = ph.action;
      ep.t_begin = t;
      ep.t_end = std::min(t + ph.duration_s, spec.duration_s);
      ep.x0 = x;
      ep.y0 = y;
      if (ph.speed > 0.0) {
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        ep.vx = ph.speed * std::cos(heading);
        ep.vy = ph.speed * std::sin(heading);
      }
      x = ep.x0 + (ep.t_end - ep.t_begin) * ep.vx;
      y = ep.y0 + (ep.t_end - ep.t_begin) * ep.vy;
      t = ep.t_end;
      plan.phases.push_back(ep);
      tpl_at = (tpl_at + 1) % tpl.size();
    }

    Trajectory traj;
    traj.agent_id = plan.agent_id;
    traj.id = plan.agent_id;
    traj.agent_class = cls;
    traj.scenario_tag = "synth";
    const auto steps = static_cast<std::size_t>(spec.duration_s / kTimestep + 1e-9) + 1;
    std::size_t phase_at = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double tk = static_cast<double>(k) * kTimestep;
      while (phase_at + 1 < plan.phases.size() && tk >= plan.phases[phase_at].t_end)
        ++phase_at;
      const ExecPhase& ep = plan.phases[phase_at];
      State st;
      st.t = tk;
      st.x = ep.x0 + (tk - ep.t_begin) * ep.vx;
      st.y = ep.y0 + (tk - ep.t_begin) * ep.vy;
      if (spec.noise_std > 0.0) {
        st.x += rng.normal(0.0, spec.noise_std);
        st.y += rng.normal(0.0, spec.noise_std);
      }
      st.vx = ep.vx;
      st.vy = ep.vy;
      st.action = ep.action;
      traj.states.push_back(st);
    }
    result.trajectories.push_back(std::move(traj));
    result.plans.push_back(std::move(plan));
  }
  return result;
}

std::pair<double, double> closed_form_position(const PhasePlan& plan, double t) {
  if (plan.phases.empty()) throw PreconditionError("closed_form_position: empty plan");
  if (t < 0.0 || t > plan.duration_s + 1e-9)
    throw PreconditionError("closed_form_position: time outside the plan");
  std::size_t at = 0;
  while (at + 1 < plan.phases.size() && t >= plan.phases[at].t_end) ++at;
  const ExecPhase& ep = plan.phases[at];
  return {ep.x0 + (t - ep.t_begin) * ep.vx, ep.y0 + (t - ep.t_begin) * ep.vy};
}

num::Tensor<double> closed_form_future(const PhasePlan& plan, std::size_t last_observed_sample) {
  if (plan.noise_std != 0.0)
    throw PreconditionError("closed_form_future: unsupported for noisy plans");
  num::Tensor<double> out({kFutureSteps, 2});
  for (std::size_t j = 0; j < kFutureSteps; ++j) {
    // The generator samples at k * kTimestep; reusing that expression keeps
    // the oracle bit-identical to the emitted states.
    const double t = static_cast<double>(last_observed_sample + 1 + j) * kTimestep;
    if (t > plan.duration_s + 1e-9)
      throw PreconditionError("closed_form_future: horizon extends past the plan end");
    const auto [px, py] = closed_form_position(plan, t);
    out.v[j * 2] = px;
    out.v[j * 2 + 1] = py;
  }
  return out;
}

void emit_csv(const std::vector<Trajectory>& trajectories, std::ostream& out) {
  out << "time_s,agent_id,agent_class,x_m,y_m,action,vx_ms,vy_ms\n";
  out << std::setprecision(17);
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.states) {
      out << s.t << ',' << traj.agent_id << ',' << to_string(traj.agent_class) << ',' << s.x
          << ',' << s.y << ',' << to_string(s.action) << ',' << s.vx << ',' << s.vy << '\n';
    }
  }
}

}  // namespace trackcast::synth
