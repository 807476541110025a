#include "trackcast/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/rng.hpp"

namespace trackcast::ingest {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last && std::isfinite(out);
}

}  // namespace

ParseResult parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty input: missing CSV header");

  // Strip a UTF-8 BOM if an exporting tool left one behind.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;

  const char* required[] = {"time_s", "agent_id", "agent_class", "x_m", "y_m", "action"};
  for (const char* name : required) {
    if (!col.count(name)) throw SchemaError(std::string("missing required CSV column: ") + name);
  }
  const bool has_vel = col.count("vx_ms") && col.count("vy_ms");

  struct Group {
    Trajectory traj;
    std::vector<std::pair<double, std::size_t>> order;  // (time, insertion index)
  };
  std::unordered_map<std::string, Group> groups;
  std::vector<std::string> group_order;

  ParseResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.rows_total;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size()) {
      ++result.rows_dropped_nonfinite;
      if (result.warnings.size() < 20)
        result.warnings.push_back("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
      continue;
    }

    State s;
    double t, x, y;
    if (!parse_double(fields[col["time_s"]], t) || !parse_double(fields[col["x_m"]], x) ||
        !parse_double(fields[col["y_m"]], y)) {
      ++result.rows_dropped_nonfinite;
      continue;
    }
    s.t = t;
    s.x = x;
    s.y = y;
    if (has_vel) {
      double vx, vy;
      if (parse_double(fields[col["vx_ms"]], vx) && parse_double(fields[col["vy_ms"]], vy)) {
        s.vx = vx;
        s.vy = vy;
      }
    }

    const std::string action_name = trim(fields[col["action"]]);
    const std::string agent_class_name = trim(fields[col["agent_class"]]);
    const auto action = parse_action(action_name);
    const auto agent_class = parse_agent(agent_class_name);
    if (!action || !agent_class) {
      ++result.rows_dropped_unknown_label;
      if (result.warnings.size() < 20)
        result.warnings.push_back("line " + std::to_string(line_no) + ": unknown label '" +
                                  (!action ? action_name : agent_class_name) + "'");
      continue;
    }
    s.action = *action;

    const std::string agent_id = trim(fields[col["agent_id"]]);
    auto it = groups.find(agent_id);
    if (it == groups.end()) {
      it = groups.emplace(agent_id, Group{}).first;
      it->second.traj.agent_id = agent_id;
      it->second.traj.id = agent_id;
      it->second.traj.agent_class = *agent_class;
      group_order.push_back(agent_id);
    } else if (it->second.traj.agent_class != *agent_class &&
               result.warnings.size() < 20) {
      result.warnings.push_back("line " + std::to_string(line_no) + ": agent '" + agent_id +
                                "' changes class mid-recording; keeping first");
    }
    Group& g = it->second;
    g.order.emplace_back(s.t, g.traj.states.size());
    g.traj.states.push_back(s);
  }

  // Stable sort per agent by time; ties keep file order.
  for (const auto& id : group_order) {
    Group& g = groups.at(id);
    std::stable_sort(g.order.begin(), g.order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<State> sorted;
    sorted.reserve(g.traj.states.size());
    for (const auto& [t, idx] : g.order) sorted.push_back(g.traj.states[idx]);
    g.traj.states = std::move(sorted);
    result.trajectories.push_back(std::move(g.traj));
  }
  std::sort(result.trajectories.begin(), result.trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.agent_id < b.agent_id; });
  return result;
}

namespace {

Trajectory resample_segment(const Trajectory& traj, std::size_t begin, std::size_t end,
                            double dt) {
  // [begin, end) indices into traj.states, end - begin >= 2.
  Trajectory out;
  out.agent_id = traj.agent_id;
  out.agent_class = traj.agent_class;
  out.scenario_tag = traj.scenario_tag;
  out.id = traj.id;

  const auto& st = traj.states;
  const double t0 = st[begin].t;
  const double t_end = st[end - 1].t;
  constexpr double kSnapTol = 1e-9;

  std::size_t src = begin;  // first source sample with t >= grid time (approx)
  for (std::size_t k = 0;; ++k) {
    const double tg = t0 + static_cast<double>(k) * dt;
    if (tg > t_end + kSnapTol) break;
    while (src + 1 < end && st[src + 1].t <= tg) ++src;

    State s;
    if (std::abs(st[src].t - tg) <= kSnapTol) {
      s = st[src];  // bitwise copy keeps resampling idempotent
      s.t = tg;
    } else if (src + 1 < end && std::abs(st[src + 1].t - tg) <= kSnapTol) {
      s = st[src + 1];
      s.t = tg;
    } else {
      const State& a = st[src];
      const State& b = st[std::min(src + 1, end - 1)];
      const double span = b.t - a.t;
      const double w = span > 0.0 ? (tg - a.t) / span : 0.0;
      s.t = tg;
      s.x = a.x + w * (b.x - a.x);
      s.y = a.y + w * (b.y - a.y);
      s.vx = a.vx + w * (b.vx - a.vx);
      s.vy = a.vy + w * (b.vy - a.vy);
      // Nearest-in-time label, ties to the earlier sample.
      s.action = (tg - a.t <= b.t - tg) ? a.action : b.action;
    }
    out.states.push_back(s);
  }
  return out;
}

}  // namespace

Trajectory resample(const Trajectory& traj, double dt) {
  if (traj.states.size() < 2)
    throw PreconditionError("resample: trajectory '" + traj.id + "' has fewer than 2 states");
  if (!(dt > 0.0)) throw PreconditionError("resample: dt must be positive");
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    if (!(traj.states[i].t > traj.states[i - 1].t))
      throw PreconditionError("resample: non-increasing timestamps in trajectory '" + traj.id +
                              "' at index " + std::to_string(i));
  }
  return resample_segment(traj, 0, traj.states.size(), dt);
}

std::vector<Trajectory> resample_split(const Trajectory& traj, double dt) {
  if (traj.states.empty()) return {};
  if (!(dt > 0.0)) throw PreconditionError("resample_split: dt must be positive");
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    if (!(traj.states[i].t > traj.states[i - 1].t))
      throw PreconditionError("resample_split: non-increasing timestamps in trajectory '" +
                              traj.id + "' at index " + std::to_string(i));
  }

  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t begin = 0;
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    if (traj.states[i].t - traj.states[i - 1].t > 2.0 * dt) {
      segments.emplace_back(begin, i);
      begin = i;
    }
  }
  segments.emplace_back(begin, traj.states.size());

  std::vector<Trajectory> out;
  const bool split = segments.size() > 1;
  std::size_t seg_no = 0;
  for (const auto& [b, e] : segments) {
    if (e - b < 2) {
      ++seg_no;
      continue;  // a lone sample between gaps carries no motion
    }
    Trajectory seg = resample_segment(traj, b, e, dt);
    if (split) seg.id = traj.id + "#" + std::to_string(seg_no);
    out.push_back(std::move(seg));
    ++seg_no;
  }
  return out;
}

Trajectory derive_velocities(const Trajectory& traj) {
  const auto& st = traj.states;
  if (st.size() < 2)
    throw PreconditionError("derive_velocities: trajectory '" + traj.id +
                            "' has fewer than 2 states");
  const double dt = st[1].t - st[0].t;
  if (!(dt > 0.0)) throw PreconditionError("derive_velocities: non-positive timestep");
  for (std::size_t i = 1; i < st.size(); ++i) {
    if (std::abs((st[i].t - st[i - 1].t) - dt) > kTimestampTol)
      throw PreconditionError("derive_velocities: non-uniform timestep in trajectory '" +
                              traj.id + "' at index " + std::to_string(i));
  }

  Trajectory out = traj;
  const std::size_t n = st.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      out.states[i].vx = (st[1].x - st[0].x) / dt;
      out.states[i].vy = (st[1].y - st[0].y) / dt;
    } else if (i == n - 1) {
      out.states[i].vx = (st[n - 1].x - st[n - 2].x) / dt;
      out.states[i].vy = (st[n - 1].y - st[n - 2].y) / dt;
    } else {
      out.states[i].vx = (st[i + 1].x - st[i - 1].x) / (2.0 * dt);
      out.states[i].vy = (st[i + 1].y - st[i - 1].y) / (2.0 * dt);
    }
  }
  return out;
}

std::vector<Tracklet> segment_tracklets(const Trajectory& traj) {
  const auto& st = traj.states;
  for (std::size_t i = 1; i < st.size(); ++i) {
    if (std::abs((st[i].t - st[i - 1].t) - kTimestep) > kTimestampTol)
      throw PreconditionError("segment_tracklets: trajectory '" + traj.id +
                              "' is not on the 0.4 s grid at index " + std::to_string(i));
  }

  std::vector<Tracklet> out;
  for (std::size_t begin = 0; begin + kTrackletSteps <= st.size(); begin += kTrackletSteps) {
    Tracklet t;
    t.agent_id = traj.agent_id;
    t.agent_class = traj.agent_class;
    t.source_trajectory_id = traj.id;
    t.observed.assign(st.begin() + begin, st.begin() + begin + kObservedSteps);
    t.future.assign(st.begin() + begin + kObservedSteps, st.begin() + begin + kTrackletSteps);
    out.push_back(std::move(t));
  }
  return out;
}

int FoldAssignment::fold(const std::string& trajectory_id) const {
  auto it = fold_of.find(trajectory_id);
  if (it == fold_of.end())
    throw PreconditionError("no fold recorded for trajectory '" + trajectory_id + "'");
  return it->second;
}

FoldAssignment assign_folds(const std::vector<Tracklet>& tracklets, int k, std::uint64_t seed) {
  if (k < 2) throw SpecError("assign_folds: k must be at least 2");

  std::vector<std::string> ids;
  for (const auto& t : tracklets) ids.push_back(t.source_trajectory_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(k))
    throw SpecError("assign_folds: " + std::to_string(ids.size()) +
                    " trajectory ids cannot fill " + std::to_string(k) + " folds");

  num::Rng rng(num::derive_seed(seed, "folds"));
  rng.shuffle(ids);

  FoldAssignment fa;
  fa.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i)
    fa.fold_of[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fa;
}

namespace {

json state_to_json(const State& s) {
  return json{{"t", s.t},   {"x", s.x},   {"y", s.y},
              {"vx", s.vx}, {"vy", s.vy}, {"action", std::string(to_string(s.action))}};
}

State state_from_json(const json& j) {
  State s;
  s.t = j.at("t").get<double>();
  s.x = j.at("x").get<double>();
  s.y = j.at("y").get<double>();
  s.vx = j.at("vx").get<double>();
  s.vy = j.at("vy").get<double>();
  const std::string name = j.at("action").get<std::string>();
  const auto action = parse_action(name);
  if (!action) throw SchemaError("tracklet archive: unknown action '" + name + "'");
  s.action = *action;
  return s;
}

}  // namespace

void write_tracklet_archive(const std::string& path, const std::vector<Tracklet>& tracklets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& t : tracklets) {
    json j;
    j["agent_id"] = t.agent_id;
    j["agent_class"] = std::string(to_string(t.agent_class));
    j["source_trajectory_id"] = t.source_trajectory_id;
    auto& obs = j["observed"] = json::array();
    for (const auto& s : t.observed) obs.push_back(state_to_json(s));
    auto& fut = j["future"] = json::array();
    for (const auto& s : t.future) fut.push_back(state_to_json(s));
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<Tracklet> read_tracklet_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<Tracklet> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("tracklet archive '" + path + "' line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    Tracklet t;
    try {
      t.agent_id = j.at("agent_id").get<std::string>();
      const std::string cls = j.at("agent_class").get<std::string>();
      const auto agent_class = parse_agent(cls);
      if (!agent_class) throw SchemaError("unknown agent class '" + cls + "'");
      t.agent_class = *agent_class;
      t.source_trajectory_id = j.at("source_trajectory_id").get<std::string>();
      for (const auto& sj : j.at("observed")) t.observed.push_back(state_from_json(sj));
      for (const auto& sj : j.at("future")) t.future.push_back(state_from_json(sj));
    } catch (const json::exception& e) {
      throw SchemaError("tracklet archive '" + path + "' line " + std::to_string(line_no) +
                        ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("tracklet archive '" + path + "' line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace trackcast::ingest
