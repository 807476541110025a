// trackcast: convert raw recordings into tracklet archives, reproduce the
// dataset statistics, and train/evaluate the trajectory and multi-task
// predictors. One binary, six subcommands; config file plus flag overrides,
// flags win.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trackcast/data_model.hpp"
#include "trackcast/errors.hpp"
#include "trackcast/ingest.hpp"
#include "trackcast/model_io.hpp"
#include "trackcast/models.hpp"
#include "trackcast/stats.hpp"
#include "trackcast/synth.hpp"
#include "trackcast/train_eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trackcast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumerical = 4;

struct RunConfig {
  ScenarioSelector vocabulary = ScenarioSelector::Scenarios2and3;
  models::ModelSpec model;
  train::TrainSpec train;
  synth::SynthSpec synth = synth::SynthSpec::defaults();
  int folds = 5;
  stats::DistanceAttribution attribution = stats::DistanceAttribution::PerAction;
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SpecError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw SpecError("config '" + path + "' must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "vocabulary") {
      const auto sel = parse_scenario(val.get<std::string>());
      if (!sel) throw SpecError("config: unknown vocabulary '" + val.get<std::string>() + "'");
      cfg.vocabulary = *sel;
    } else if (key == "model") {
      cfg.model = models::model_spec_from_json(val);
    } else if (key == "train") {
      cfg.train = train::train_spec_from_json(val);
    } else if (key == "synth") {
      cfg.synth = synth::synth_spec_from_json(val);
    } else if (key == "folds") {
      cfg.folds = val.get<int>();
      if (cfg.folds < 2) throw SpecError("config: folds must be >= 2");
    } else if (key == "distance_attribution") {
      const std::string a = val.get<std::string>();
      if (a == "per_action") cfg.attribution = stats::DistanceAttribution::PerAction;
      else if (a == "whole_segment") cfg.attribution = stats::DistanceAttribution::WholeSegment;
      else throw SpecError("config: unknown distance_attribution '" + a + "'");
    } else {
      throw SpecError("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

// ---- convert ----

// Schema map for foreign exports: column renames, unit scales, label
// aliases. Applied textually before the regular parser runs.
struct SchemaMap {
  std::map<std::string, std::string> columns;  // canonical -> foreign
  double position_scale = 1.0;
  double time_scale = 1.0;
  std::map<std::string, std::string> action_map;       // foreign -> canonical
  std::map<std::string, std::string> agent_class_map;  // foreign -> canonical
};

SchemaMap load_schema_map(const std::string& path) {
  SchemaMap m;
  if (path.empty()) return m;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open schema map '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SpecError("schema map '" + path + "': " + e.what());
  }
  for (const auto& [key, val] : j.items()) {
    if (key == "columns")
      m.columns = val.get<std::map<std::string, std::string>>();
    else if (key == "position_scale")
      m.position_scale = val.get<double>();
    else if (key == "time_scale")
      m.time_scale = val.get<double>();
    else if (key == "action_map")
      m.action_map = val.get<std::map<std::string, std::string>>();
    else if (key == "agent_class_map")
      m.agent_class_map = val.get<std::map<std::string, std::string>>();
    else
      throw SpecError("schema map: unknown key '" + key + "'");
  }
  return m;
}

std::vector<std::string> split_line(const std::string& line) {
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

// Rewrites a foreign CSV into the canonical schema in memory.
std::string apply_schema_map(std::istream& in, const SchemaMap& map) {
  std::string line;
  if (!std::getline(in, line)) return "";
  auto header = split_line(line);

  auto foreign_of = [&](const std::string& canonical) {
    auto it = map.columns.find(canonical);
    return it == map.columns.end() ? canonical : it->second;
  };
  const char* canonical[] = {"time_s", "agent_id", "agent_class", "x_m",
                             "y_m",    "action",   "vx_ms",       "vy_ms"};
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = static_cast<int>(i);

  std::vector<int> take;       // source column per emitted canonical column
  std::vector<std::string> emit;
  for (const char* name : canonical) {
    auto it = col.find(foreign_of(name));
    if (it == col.end()) continue;  // optional/missing columns surface later
    take.push_back(it->second);
    emit.emplace_back(name);
  }

  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < emit.size(); ++i) out << (i ? "," : "") << emit[i];
  out << '\n';

  auto relabel = [](const std::map<std::string, std::string>& m, const std::string& v) {
    auto it = m.find(v);
    return it == m.end() ? v : it->second;
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_line(line);
    for (std::size_t i = 0; i < emit.size(); ++i) {
      if (i) out << ',';
      const auto src = static_cast<std::size_t>(take[i]);
      std::string v = src < fields.size() ? fields[src] : "";
      const std::string& name = emit[i];
      if (name == "x_m" || name == "y_m") {
        if (map.position_scale != 1.0) {
          try {
            out << std::stod(v) * map.position_scale;
            continue;
          } catch (...) { /* pass through; the parser counts the bad row */
          }
        }
      } else if (name == "time_s") {
        if (map.time_scale != 1.0) {
          try {
            out << std::stod(v) * map.time_scale;
            continue;
          } catch (...) {
          }
        }
      } else if (name == "action") {
        v = relabel(map.action_map, v);
      } else if (name == "agent_class") {
        v = relabel(map.agent_class_map, v);
      }
      out << v;
    }
    out << '\n';
  }
  return out.str();
}

int cmd_convert(const std::string& input, const std::string& schema_map_path,
                const std::string& out_dir) {
  std::ifstream in(input, std::ios::binary);
  if (!in) throw IoError("cannot open input '" + input + "'");

  // A whitespace-only file is a valid no-data export.
  {
    std::string probe((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (probe.find_first_not_of(" \t\r\n") == std::string::npos) {
      ensure_out_dir(out_dir);
      ingest::write_tracklet_archive((fs::path(out_dir) / "tracklets.ndjson").string(), {});
      std::cout << "warning: input '" << input << "' is empty\n"
                << "trajectories_in=0 segments=0 tracklets_out=0 rows_dropped=0\n";
      return kExitOk;
    }
    in.clear();
    in.seekg(0);
  }

  ingest::ParseResult parsed;
  if (!schema_map_path.empty()) {
    const SchemaMap map = load_schema_map(schema_map_path);
    std::istringstream mapped(apply_schema_map(in, map));
    parsed = ingest::parse_csv(mapped);
  } else {
    parsed = ingest::parse_csv(in);
  }

  std::vector<Tracklet> tracklets;
  std::size_t segments = 0;
  for (const auto& traj : parsed.trajectories) {
    for (auto& seg : ingest::resample_split(traj, kTimestep)) {
      ++segments;
      const auto with_vel = ingest::derive_velocities(seg);
      auto cut = ingest::segment_tracklets(with_vel);
      tracklets.insert(tracklets.end(), cut.begin(), cut.end());
    }
  }

  ensure_out_dir(out_dir);
  ingest::write_tracklet_archive((fs::path(out_dir) / "tracklets.ndjson").string(), tracklets);

  for (const auto& w : parsed.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "trajectories_in=" << parsed.trajectories.size() << " segments=" << segments
            << " tracklets_out=" << tracklets.size()
            << " rows_dropped=" << (parsed.rows_dropped_nonfinite + parsed.rows_dropped_unknown_label)
            << " (nonfinite=" << parsed.rows_dropped_nonfinite
            << " unknown_label=" << parsed.rows_dropped_unknown_label << ")\n";
  return kExitOk;
}

// ---- stats ----

int cmd_stats(const std::string& archive, const std::string& out_dir,
              stats::DistanceAttribution attribution) {
  const auto tracklets = ingest::read_tracklet_archive(archive);
  const auto counts = stats::action_distribution(tracklets);
  const auto per_action = stats::per_action_kinematics(tracklets, attribution);
  const auto global = stats::global_kinematics(tracklets);

  ensure_out_dir(out_dir);
  write_text((fs::path(out_dir) / "kinematics.csv").string(),
             stats::kinematics_csv(per_action, global));
  write_text((fs::path(out_dir) / "distribution.json").string(),
             stats::distribution_json(counts));

  if (tracklets.empty()) std::cout << "warning: archive holds no tracklets\n";
  std::cout << "tracklets=" << tracklets.size() << " steps=" << global.n
            << " speed_mean=" << global.speed_mean << " dist_mean=" << global.dist_mean << '\n';
  return kExitOk;
}

// ---- synth ----

int cmd_synth(const synth::SynthSpec& spec, const std::string& out_dir) {
  const auto result = synth::generate(spec);
  ensure_out_dir(out_dir);
  const std::string path = (fs::path(out_dir) / "synth.csv").string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  synth::emit_csv(result.trajectories, out);
  if (!out) throw IoError("write failed for '" + path + "'");
  std::size_t states = 0;
  for (const auto& t : result.trajectories) states += t.states.size();
  std::cout << "trajectories=" << result.trajectories.size() << " states=" << states << '\n';
  return kExitOk;
}

// ---- train ----

void validate_archive(const std::vector<Tracklet>& tracklets, const Vocabulary& vocab) {
  if (tracklets.empty()) throw SchemaError("archive holds no tracklets");
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    const auto violations = validate_tracklet(tracklets[i], vocab);
    if (!violations.empty())
      throw SchemaError("tracklet " + std::to_string(i) + ": " + violations.front());
  }
}

template <typename T>
int run_train(const std::vector<Tracklet>& tracklets, const RunConfig& cfg,
              const Vocabulary& vocab, const std::string& out_dir, int jobs) {
  const auto cv =
      train::cross_validate<T>(tracklets, cfg.folds, cfg.model, cfg.train, vocab, jobs);

  ensure_out_dir(out_dir);
  write_text((fs::path(out_dir) / "metrics.ndjson").string(),
             train::metrics_ndjson(cv.report, utc_timestamp()));
  std::cout << train::metrics_table(cv.report);

  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    CheckpointMeta meta;
    meta.dtype = cfg.train.dtype;
    meta.vocabulary = cfg.vocabulary;
    meta.spec = cfg.model;
    meta.fold = static_cast<int>(f);
    meta.metrics = cv.folds[f].metrics;
    std::vector<std::string> ids;
    for (std::size_t idx : cv.val_indices[f]) ids.push_back(tracklets[idx].source_trajectory_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    meta.val_trajectory_ids = std::move(ids);
    const std::string path =
        (fs::path(out_dir) / ("fold" + std::to_string(f) + ".ckpt")).string();
    save_model_checkpoint(path, cv.folds[f].model, meta);
  }
  return kExitOk;
}

int cmd_train(const std::string& archive, RunConfig cfg, const std::string& out_dir, int jobs,
              bool deterministic) {
  auto tracklets = ingest::read_tracklet_archive(archive);
  const Vocabulary vocab = scenario_vocabulary(cfg.vocabulary);
  validate_archive(tracklets, vocab);
  cfg.model.action_vocab_size = vocab.actions().size();
  cfg.model.agent_vocab_size = vocab.agent_classes().size();
  cfg.model.validate();
  cfg.train.validate();
  if (deterministic) jobs = 1;
  if (cfg.train.dtype == train::Dtype::F64)
    return run_train<double>(tracklets, cfg, vocab, out_dir, jobs);
  return run_train<float>(tracklets, cfg, vocab, out_dir, jobs);
}

// ---- eval ----

std::vector<std::size_t> select_indices(const std::vector<Tracklet>& tracklets,
                                        const CheckpointMeta& meta, bool all) {
  std::vector<std::size_t> indices;
  if (all || meta.val_trajectory_ids.empty()) {
    indices.resize(tracklets.size());
    for (std::size_t i = 0; i < tracklets.size(); ++i) indices[i] = i;
    return indices;
  }
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    if (std::binary_search(meta.val_trajectory_ids.begin(), meta.val_trajectory_ids.end(),
                           tracklets[i].source_trajectory_id))
      indices.push_back(i);
  }
  if (indices.empty())
    throw SchemaError("none of the checkpoint's validation trajectories are in this archive");
  return indices;
}

template <typename T>
train::FoldMetrics run_eval(const std::string& ckpt, const CheckpointMeta& meta,
                            const std::vector<Tracklet>& tracklets,
                            const std::vector<std::size_t>& indices, const Vocabulary& vocab) {
  const auto model = load_model_checkpoint<T>(ckpt, meta);
  const auto em = train::evaluate(model, tracklets, indices, vocab);
  train::FoldMetrics m;
  m.fold = meta.fold;
  m.ade = em.ade;
  m.fde = em.fde;
  m.acc = em.acc;
  m.f1 = em.f1;
  if (meta.metrics) {
    m.val_loss = meta.metrics->val_loss;
    m.epochs = meta.metrics->epochs;
  }
  return m;
}

int cmd_eval(const std::string& archive, const std::string& ckpt, const std::string& out_dir,
             bool all) {
  const auto meta = read_checkpoint_meta(ckpt);
  const auto tracklets = ingest::read_tracklet_archive(archive);
  const Vocabulary vocab = scenario_vocabulary(meta.vocabulary);
  validate_archive(tracklets, vocab);
  const auto indices = select_indices(tracklets, meta, all);

  const train::FoldMetrics m = meta.dtype == train::Dtype::F64
                                   ? run_eval<double>(ckpt, meta, tracklets, indices, vocab)
                                   : run_eval<float>(ckpt, meta, tracklets, indices, vocab);

  const auto report = train::aggregate_metrics({m});
  std::cout << train::metrics_table(report);
  if (!out_dir.empty()) {
    ensure_out_dir(out_dir);
    write_text((fs::path(out_dir) / "eval.ndjson").string(),
               train::metrics_ndjson(report, utc_timestamp()));
  }
  return kExitOk;
}

// ---- predict ----

json state_json(const State& s) {
  return json{{"t", s.t},   {"x", s.x},   {"y", s.y},
              {"vx", s.vx}, {"vy", s.vy}, {"action", std::string(to_string(s.action))}};
}

template <typename T>
json run_predict(const std::string& ckpt, const CheckpointMeta& meta,
                 const std::vector<Tracklet>& tracklets, std::size_t index,
                 const Vocabulary& vocab) {
  const auto model = load_model_checkpoint<T>(ckpt, meta);
  const auto preds = models::predict(model, tracklets, {index}, vocab);
  const models::PredictionOutput& p = preds.front();
  const Tracklet& t = tracklets[index];

  json rec;
  rec["tracklet"] = index;
  rec["agent_id"] = t.agent_id;
  rec["agent_class"] = std::string(to_string(t.agent_class));
  rec["source_trajectory_id"] = t.source_trajectory_id;
  auto& obs = rec["observed"] = json::array();
  for (const auto& s : t.observed) obs.push_back(state_json(s));
  auto& fut = rec["true_future"] = json::array();
  for (const auto& s : t.future) fut.push_back(state_json(s));

  if (!p.positions.empty()) {
    auto& pos = rec["predicted_positions"] = json::array();
    auto& vel = rec["predicted_velocities"] = json::array();
    for (std::size_t j = 0; j < kFutureSteps; ++j) {
      pos.push_back({p.positions.v[j * 2], p.positions.v[j * 2 + 1]});
      vel.push_back({p.velocities.v[j * 2], p.velocities.v[j * 2 + 1]});
    }
    num::Tensor<double> truth({kFutureSteps, 2});
    for (std::size_t j = 0; j < kFutureSteps; ++j) {
      truth.v[j * 2] = t.future[j].x;
      truth.v[j * 2 + 1] = t.future[j].y;
    }
    rec["ade"] = train::ade(truth, p.positions);
    rec["fde"] = train::fde(truth, p.positions);
  }
  if (p.action_probs) {
    auto& acts = rec["predicted_actions"] = json::array();
    for (ActionClass a : p.actions) acts.push_back(std::string(to_string(a)));
    auto& probs = rec["action_probs"] = json::array();
    for (std::size_t j = 0; j < kFutureSteps; ++j) {
      json row = json::array();
      for (std::size_t m = 0; m < vocab.actions().size(); ++m)
        row.push_back(p.action_probs->v[j * vocab.actions().size() + m]);
      probs.push_back(row);
    }
  }
  return rec;
}

int cmd_predict(const std::string& archive, const std::string& ckpt, std::int64_t index,
                const std::string& out_dir) {
  const auto meta = read_checkpoint_meta(ckpt);
  const auto tracklets = ingest::read_tracklet_archive(archive);
  const Vocabulary vocab = scenario_vocabulary(meta.vocabulary);
  validate_archive(tracklets, vocab);
  if (index < 0 || static_cast<std::size_t>(index) >= tracklets.size())
    throw SchemaError("tracklet index " + std::to_string(index) + " outside archive of " +
                      std::to_string(tracklets.size()));

  const json rec = meta.dtype == train::Dtype::F64
                       ? run_predict<double>(ckpt, meta, tracklets,
                                             static_cast<std::size_t>(index), vocab)
                       : run_predict<float>(ckpt, meta, tracklets,
                                            static_cast<std::size_t>(index), vocab);
  std::cout << rec.dump(2) << '\n';
  if (!out_dir.empty()) {
    ensure_out_dir(out_dir);
    write_text((fs::path(out_dir) / "prediction.json").string(), rec.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tracklet pipeline: dataset statistics and trajectory/action prediction"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool deterministic = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--jobs", jobs, "worker threads for fold-level parallelism");
  app.add_flag("--deterministic", deterministic, "force single-job, bit-reproducible runs");
  app.add_option("--out", out_dir, "output directory");

  std::string input, schema_map, archive, checkpoint;
  std::int64_t tracklet_index = 0;
  bool eval_all = false;

  auto* convert = app.add_subcommand("convert", "raw CSV -> tracklet archive");
  convert->add_option("--input", input, "raw CSV recording")->required();
  convert->add_option("--schema-map", schema_map, "column/unit/label mapping JSON");

  auto* stats_cmd = app.add_subcommand("stats", "dataset statistics reports");
  stats_cmd->add_option("--archive", archive, "tracklet archive")->required();

  app.add_subcommand("synth", "generate a synthetic dataset CSV");

  auto* train_cmd = app.add_subcommand("train", "k-fold cross-validated training");
  train_cmd->add_option("--archive", archive, "tracklet archive")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
  eval_cmd->add_option("--archive", archive, "tracklet archive")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "parameter file")->required();
  eval_cmd->add_flag("--all", eval_all, "evaluate every tracklet, not the recorded split");

  auto* predict_cmd = app.add_subcommand("predict", "emit one tracklet's prediction record");
  predict_cmd->add_option("--archive", archive, "tracklet archive")->required();
  predict_cmd->add_option("--checkpoint", checkpoint, "parameter file")->required();
  predict_cmd->add_option("--tracklet", tracklet_index, "record index in the archive")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) {
      cfg.train.seed = *seed;
      cfg.synth.seed = *seed;
    }
    if (app.got_subcommand("convert")) return cmd_convert(input, schema_map, out_dir);
    if (app.got_subcommand("stats")) return cmd_stats(archive, out_dir, cfg.attribution);
    if (app.got_subcommand("synth")) return cmd_synth(cfg.synth, out_dir);
    if (app.got_subcommand("train"))
      return cmd_train(archive, cfg, out_dir, jobs, deterministic);
    if (app.got_subcommand("eval")) return cmd_eval(archive, checkpoint, out_dir, eval_all);
    if (app.got_subcommand("predict"))
      return cmd_predict(archive, checkpoint, tracklet_index, out_dir);
    return kExitConfig;
  } catch (const SpecError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    // Schema, IO, vocabulary, and shape problems all trace back to the input.
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
