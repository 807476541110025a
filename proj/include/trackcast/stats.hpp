#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "trackcast/data_model.hpp"

namespace trackcast::stats {

// Streaming mean/variance accumulator (Welford), mergeable pairwise so
// parallel partial reductions combine deterministically.
struct Accumulator {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const Accumulator& other);
  double std_dev() const;  // population convention, 0 for n < 2
};

// Per-action kinematic profile. Speed/acceleration samples are per
// tracklet-step; distance samples are per 8 s segment among segments where
// the action occurs.
struct ActionKinematics {
  ActionClass action = ActionClass::Walk;  // meaningless for the global row
  std::size_t n = 0;                       // tracklet-steps with this action
  double speed_mean = 0.0, speed_std = 0.0;   // m/s
  double accel_mean = 0.0, accel_std = 0.0;   // m/s^2, signed d(speed)/dt
  double dist_mean = 0.0, dist_std = 0.0;     // m per segment
};

// How a segment's path length turns into per-action distance samples:
//   PerAction    - each action gets the distance covered over its own steps.
//   WholeSegment - each action present gets the full segment distance.
enum class DistanceAttribution { PerAction, WholeSegment };

// Per-timestep action occurrence counts over all 20-step segments.
std::array<std::size_t, kNumActionClasses> action_distribution(
    const std::vector<Tracklet>& tracklets);

std::vector<ActionKinematics> per_action_kinematics(
    const std::vector<Tracklet>& tracklets,
    DistanceAttribution attribution = DistanceAttribution::PerAction);

// Same formulas pooled over all steps/segments.
ActionKinematics global_kinematics(const std::vector<Tracklet>& tracklets);

// CSV report: action,n,speed_mean,speed_std,accel_mean,accel_std,dist_mean,dist_std
// with a trailing Global row. The JSON distribution is an array of
// {action,count} objects sorted by descending count (ties by label index).
std::string kinematics_csv(const std::vector<ActionKinematics>& per_action,
                           const ActionKinematics& global);
std::string distribution_json(const std::array<std::size_t, kNumActionClasses>& counts);

}  // namespace trackcast::stats
