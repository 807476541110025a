#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "trackcast/data_model.hpp"

namespace trackcast::ingest {

// One CSV row before grouping. Unit conversion from foreign exports happens
// in the converter tool, not here.
struct RawRecord {
  double time = 0.0;
  std::string agent_id;
  double x = 0.0;
  double y = 0.0;
  std::string agent_class;
  std::string action;
  bool has_velocity = false;
  double vx = 0.0;
  double vy = 0.0;
};

struct ParseResult {
  std::vector<Trajectory> trajectories;
  std::size_t rows_total = 0;
  std::size_t rows_dropped_nonfinite = 0;
  std::size_t rows_dropped_unknown_label = 0;
  std::vector<std::string> warnings;
};

// Input schema (header required):
//   time_s,agent_id,agent_class,x_m,y_m,action[,vx_ms,vy_ms]
// Records are grouped per agent_id and stably sorted by time. Rows with
// non-finite or unparseable coordinates are dropped and counted; rows with
// unknown labels likewise. Missing required columns raise SchemaError.
ParseResult parse_csv(std::istream& in);

// Resamples onto a uniform grid starting at the first timestamp. Positions
// are linearly interpolated; the action label is copied from the
// nearest-in-time source sample (ties to the earlier one). Grid points within
// 1e-9 s of a source sample copy it bitwise, which makes resampling
// idempotent on already-uniform input. Throws PreconditionError for fewer
// than 2 states or non-increasing timestamps.
Trajectory resample(const Trajectory& traj, double dt = kTimestep);

// Splitting variant: source gaps larger than 2*dt cut the trajectory into
// independently resampled segments (ids get a "#<n>" suffix). Segments left
// with fewer than 2 source states are dropped.
std::vector<Trajectory> resample_split(const Trajectory& traj, double dt = kTimestep);

// Central differences for interior samples, one-sided at the ends. Any
// velocities already present are overwritten. Requires a uniform timestep.
Trajectory derive_velocities(const Trajectory& traj);

// Consecutive non-overlapping 20-state windows; first 8 observed, last 12
// future; the trailing remainder is discarded. Requires uniform dt = 0.4 s.
std::vector<Tracklet> segment_tracklets(const Trajectory& traj);

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;  // source_trajectory_id -> fold

  int fold(const std::string& trajectory_id) const;
};

// Groups by source_trajectory_id so every tracklet of one trajectory lands in
// the same fold, shuffles the ids with the seeded RNG, and deals them
// round-robin. Throws SpecError when there are fewer ids than folds.
FoldAssignment assign_folds(const std::vector<Tracklet>& tracklets, int k, std::uint64_t seed);

// Newline-delimited JSON, one tracklet per line, field names as in Tracklet.
void write_tracklet_archive(const std::string& path, const std::vector<Tracklet>& tracklets);
std::vector<Tracklet> read_tracklet_archive(const std::string& path);

}  // namespace trackcast::ingest
