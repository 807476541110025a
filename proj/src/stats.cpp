#include "trackcast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace trackcast::stats {

void Accumulator::add(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

void Accumulator::merge(const Accumulator& other) {
  if (other.n == 0) return;
  if (n == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(n);
  const double nb = static_cast<double>(other.n);
  const double delta = other.mean - mean;
  const double nt = na + nb;
  mean += delta * (nb / nt);
  m2 += other.m2 + delta * delta * (na * nb / nt);
  n += other.n;
}

double Accumulator::std_dev() const {
  if (n < 2) return 0.0;
  return std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
}

namespace {

struct Profile {
  Accumulator speed;
  Accumulator accel;
  Accumulator dist;
};

std::vector<const State*> segment_states(const Tracklet& t) {
  std::vector<const State*> st;
  st.reserve(kTrackletSteps);
  for (const auto& s : t.observed) st.push_back(&s);
  for (const auto& s : t.future) st.push_back(&s);
  return st;
}

// Accumulates one tracklet into per-action profiles (index kNumActionClasses
// holds the global pool).
void accumulate_tracklet(const Tracklet& t, DistanceAttribution attribution,
                         std::array<Profile, kNumActionClasses + 1>& prof) {
  const auto st = segment_states(t);
  const std::size_t n = st.size();
  if (n == 0) return;

  std::vector<double> speed(n);
  for (std::size_t i = 0; i < n; ++i) speed[i] = std::hypot(st[i]->vx, st[i]->vy);

  Profile& global = prof[kNumActionClasses];
  for (std::size_t i = 0; i < n; ++i) {
    double a;
    if (n < 2)
      a = 0.0;
    else if (i == 0)
      a = (speed[1] - speed[0]) / kTimestep;
    else if (i == n - 1)
      a = (speed[n - 1] - speed[n - 2]) / kTimestep;
    else
      a = (speed[i + 1] - speed[i - 1]) / (2.0 * kTimestep);

    Profile& p = prof[static_cast<std::size_t>(st[i]->action)];
    p.speed.add(speed[i]);
    p.accel.add(a);
    global.speed.add(speed[i]);
    global.accel.add(a);
  }

  // Path length per interval, attributed to the action at the interval's
  // starting step.
  std::array<double, kNumActionClasses> dist_by_action{};
  std::array<bool, kNumActionClasses> present{};
  double dist_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) present[static_cast<std::size_t>(st[i]->action)] = true;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = std::hypot(st[i + 1]->x - st[i]->x, st[i + 1]->y - st[i]->y);
    dist_by_action[static_cast<std::size_t>(st[i]->action)] += d;
    dist_total += d;
  }
  for (std::size_t a = 0; a < kNumActionClasses; ++a) {
    if (!present[a]) continue;
    prof[a].dist.add(attribution == DistanceAttribution::PerAction ? dist_by_action[a]
                                                                   : dist_total);
  }
  global.dist.add(dist_total);
}

ActionKinematics to_kinematics(const Profile& p) {
  ActionKinematics k;
  k.n = p.speed.n;
  k.speed_mean = p.speed.n ? p.speed.mean : 0.0;
  k.speed_std = p.speed.std_dev();
  k.accel_mean = p.accel.n ? p.accel.mean : 0.0;
  k.accel_std = p.accel.std_dev();
  k.dist_mean = p.dist.n ? p.dist.mean : 0.0;
  k.dist_std = p.dist.std_dev();
  return k;
}

std::array<Profile, kNumActionClasses + 1> accumulate_all(const std::vector<Tracklet>& tracklets,
                                                          DistanceAttribution attribution) {
  std::array<Profile, kNumActionClasses + 1> prof;
  for (const auto& t : tracklets) accumulate_tracklet(t, attribution, prof);
  return prof;
}

}  // namespace

std::array<std::size_t, kNumActionClasses> action_distribution(
    const std::vector<Tracklet>& tracklets) {
  std::array<std::size_t, kNumActionClasses> counts{};
  for (const auto& t : tracklets) {
    for (const auto& s : t.observed) ++counts[static_cast<std::size_t>(s.action)];
    for (const auto& s : t.future) ++counts[static_cast<std::size_t>(s.action)];
  }
  return counts;
}

std::vector<ActionKinematics> per_action_kinematics(const std::vector<Tracklet>& tracklets,
                                                    DistanceAttribution attribution) {
  const auto prof = accumulate_all(tracklets, attribution);
  std::vector<ActionKinematics> out;
  for (std::size_t a = 0; a < kNumActionClasses; ++a) {
    if (prof[a].speed.n == 0) continue;
    ActionKinematics k = to_kinematics(prof[a]);
    k.action = static_cast<ActionClass>(a);
    out.push_back(k);
  }
  return out;
}

ActionKinematics global_kinematics(const std::vector<Tracklet>& tracklets) {
  const auto prof = accumulate_all(tracklets, DistanceAttribution::PerAction);
  return to_kinematics(prof[kNumActionClasses]);
}

namespace {

void csv_row(std::ostringstream& os, const std::string& label, const ActionKinematics& k) {
  os << label << ',' << k.n;
  const double vals[] = {k.speed_mean, k.speed_std, k.accel_mean,
                         k.accel_std,  k.dist_mean, k.dist_std};
  os.precision(9);
  for (double v : vals) os << ',' << v;
  os << '\n';
}

}  // namespace

std::string kinematics_csv(const std::vector<ActionKinematics>& per_action,
                           const ActionKinematics& global) {
  std::ostringstream os;
  os << "action,n,speed_mean,speed_std,accel_mean,accel_std,dist_mean,dist_std\n";
  for (const auto& k : per_action) csv_row(os, std::string(to_string(k.action)), k);
  csv_row(os, "Global", global);
  return os.str();
}

std::string distribution_json(const std::array<std::size_t, kNumActionClasses>& counts) {
  std::vector<std::size_t> order(kNumActionClasses);
  for (std::size_t i = 0; i < kNumActionClasses; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });

  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i : order) {
    arr.push_back({{"action", std::string(to_string(static_cast<ActionClass>(i)))},
                   {"count", counts[i]}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace trackcast::stats
