// Drives the installed binary end to end. Invoke as: test_cli <path-to-trackcast>
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "trackcast/ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_binary;

struct CmdResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto capture = scratch / "last_cmd_output.txt";
  const std::string cmd = g_binary + " " + args + " > " + capture.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.output = testutil::read_file(capture);
  return r;
}

// Small-width model and a 2-fold split keep the training cases quick.
const char* kTrainConfig = R"({
  "folds": 2,
  "model": {"task": "MTL", "d_model": 8, "heads": 2, "d_ff": 16,
             "embed_hidden": 8, "decoder_hidden": 16,
             "use_actions_in_input": true},
  "train": {"max_epochs": 2, "batch_size": 16, "dtype": "f32"},
  "synth": {"n_trajectories": 6, "duration_s": 20.0, "seed": 3}
})";

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

// Everything after the timestamp header line.
std::string tail_after_header(const std::string& ndjson) {
  auto nl = ndjson.find('\n');
  REQUIRE(nl != std::string::npos);
  return ndjson.substr(nl + 1);
}

}  // namespace

TEST_CASE("synth, convert and stats round-trip") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"),
                       R"({"synth": {"n_trajectories": 6, "duration_s": 20.0, "seed": 3}})");

  auto synth = run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " +
                           tmp.file("raw").string(),
                       tmp.path());
  CHECK(synth.code == 0);
  CHECK(synth.output.find("trajectories=6") != std::string::npos);
  REQUIRE(fs::exists(tmp.file("raw") / "synth.csv"));

  auto convert = run_cli("convert --input " + (tmp.file("raw") / "synth.csv").string() +
                             " --out " + tmp.file("data").string(),
                         tmp.path());
  CHECK(convert.code == 0);
  CHECK(convert.output.find("tracklets_out=12") != std::string::npos);
  auto tracklets =
      trackcast::ingest::read_tracklet_archive((tmp.file("data") / "tracklets.ndjson").string());
  CHECK(tracklets.size() == 12);  // 51 samples -> 2 windows per trajectory

  auto stats = run_cli("stats --archive " + (tmp.file("data") / "tracklets.ndjson").string() +
                           " --out " + tmp.file("rep").string(),
                       tmp.path());
  CHECK(stats.code == 0);
  auto csv = testutil::read_file(tmp.file("rep") / "kinematics.csv");
  CHECK(csv.rfind("action,n,speed_mean,speed_std,accel_mean,accel_std,dist_mean,dist_std\n",
                  0) == 0);
  CHECK(csv.find("Global,") != std::string::npos);
  auto dist = json::parse(testutil::read_file(tmp.file("rep") / "distribution.json"));
  REQUIRE(dist.is_array());
  CHECK(dist.size() >= 2);
  // Descending counts.
  for (std::size_t i = 1; i < dist.size(); ++i) {
    CHECK(dist[i - 1].at("count").get<std::size_t>() >=
          dist[i].at("count").get<std::size_t>());
  }
}

TEST_CASE("convert handles empty and malformed inputs per contract") {
  testutil::TempDir tmp;

  testutil::write_file(tmp.file("empty.csv"), "\n  \n");
  auto empty = run_cli("convert --input " + tmp.file("empty.csv").string() + " --out " +
                           tmp.file("out_empty").string(),
                       tmp.path());
  CHECK(empty.code == 0);
  CHECK(empty.output.find("warning") != std::string::npos);
  auto archived = trackcast::ingest::read_tracklet_archive(
      (tmp.file("out_empty") / "tracklets.ndjson").string());
  CHECK(archived.empty());

  testutil::write_file(tmp.file("bad.csv"), "frame,who,where\n1,a,2\n");
  auto bad = run_cli("convert --input " + tmp.file("bad.csv").string() + " --out " +
                         tmp.file("out_bad").string(),
                     tmp.path());
  CHECK(bad.code == 2);

  auto missing = run_cli("convert --input " + tmp.file("nope.csv").string() + " --out " +
                             tmp.file("out_missing").string(),
                         tmp.path());
  CHECK(missing.code == 2);
}

TEST_CASE("a schema map translates foreign columns, units and labels") {
  testutil::TempDir tmp;
  // Positions in millimeters, foreign column and label names.
  std::ostringstream csv;
  csv << "ts,person,kind,px,py,act\n";
  for (int i = 0; i < 20; ++i) {
    csv << (i * 0.4) << ",p1,visitor," << (i * 400) << ",0,walking\n";
  }
  testutil::write_file(tmp.file("foreign.csv"), csv.str());
  testutil::write_file(tmp.file("map.json"), R"({
    "columns": {"time_s": "ts", "agent_id": "person", "agent_class": "kind",
                 "x_m": "px", "y_m": "py", "action": "act"},
    "position_scale": 0.001,
    "action_map": {"walking": "Walk"},
    "agent_class_map": {"visitor": "VisitorsAlone"}
  })");
  auto convert = run_cli("convert --input " + tmp.file("foreign.csv").string() +
                             " --schema-map " + tmp.file("map.json").string() + " --out " +
                             tmp.file("out").string(),
                         tmp.path());
  CHECK(convert.code == 0);
  auto tracklets = trackcast::ingest::read_tracklet_archive(
      (tmp.file("out") / "tracklets.ndjson").string());
  REQUIRE(tracklets.size() == 1);
  CHECK(tracklets[0].agent_class == trackcast::AgentClass::VisitorsAlone);
  CHECK(tracklets[0].observed[0].action == trackcast::ActionClass::Walk);
  // 400 mm per step became 0.4 m.
  CHECK(tracklets[0].observed[1].x == doctest::Approx(0.4));
}

TEST_CASE("config errors exit with code 3") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"), R"({"fodls": 2})");
  auto r = run_cli("synth --config " + tmp.file("cfg.json").string() + " --out " +
                       tmp.file("out").string(),
                   tmp.path());
  CHECK(r.code == 3);

  auto gone = run_cli("synth --config " + tmp.file("gone.json").string() + " --out " +
                          tmp.file("out2").string(),
                      tmp.path());
  CHECK(gone.code == 3);

  testutil::write_file(tmp.file("badfolds.json"), R"({"folds": 1})");
  auto folds = run_cli("synth --config " + tmp.file("badfolds.json").string() + " --out " +
                           tmp.file("out3").string(),
                       tmp.path());
  CHECK(folds.code == 3);
}

TEST_CASE("train, eval and predict agree on the artifacts") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"), kTrainConfig);
  const std::string cfg = " --config " + tmp.file("cfg.json").string();

  REQUIRE(run_cli("synth" + cfg + " --out " + tmp.file("raw").string(), tmp.path()).code == 0);
  REQUIRE(run_cli("convert --input " + (tmp.file("raw") / "synth.csv").string() + " --out " +
                      tmp.file("data").string(),
                  tmp.path())
              .code == 0);
  const std::string archive = (tmp.file("data") / "tracklets.ndjson").string();

  auto train = run_cli("train --archive " + archive + cfg + " --out " +
                           tmp.file("run1").string(),
                       tmp.path());
  REQUIRE(train.code == 0);
  auto metrics_text = testutil::read_file(tmp.file("run1") / "metrics.ndjson");
  auto metric_lines = lines_of(metrics_text);
  REQUIRE(metric_lines.size() == 4);  // header + 2 folds + aggregate
  CHECK(json::parse(metric_lines[0]).contains("generated_at"));
  CHECK(json::parse(metric_lines[3]).at("aggregate") == true);
  REQUIRE(fs::exists(tmp.file("run1") / "fold0.ckpt"));
  REQUIRE(fs::exists(tmp.file("run1") / "fold0.ckpt.json"));
  REQUIRE(fs::exists(tmp.file("run1") / "fold1.ckpt"));

  // Eval on the recorded validation split reproduces the fold row exactly.
  auto eval = run_cli("eval --archive " + archive + " --checkpoint " +
                          (tmp.file("run1") / "fold0.ckpt").string() + " --out " +
                          tmp.file("eval0").string(),
                      tmp.path());
  REQUIRE(eval.code == 0);
  auto eval_lines = lines_of(testutil::read_file(tmp.file("eval0") / "eval.ndjson"));
  REQUIRE(eval_lines.size() == 3);  // header + 1 fold + aggregate
  auto eval_row = json::parse(eval_lines[1]);
  auto fold0_row = json::parse(metric_lines[1]);
  REQUIRE(fold0_row.at("fold") == 0);
  CHECK(eval_row.at("ade").get<double>() == fold0_row.at("ade").get<double>());
  CHECK(eval_row.at("fde").get<double>() == fold0_row.at("fde").get<double>());
  CHECK(eval_row.at("acc").get<double>() == fold0_row.at("acc").get<double>());
  CHECK(eval_row.at("f1").get<double>() == fold0_row.at("f1").get<double>());

  // Predict writes a parseable record with 12 predicted steps.
  auto predict = run_cli("predict --archive " + archive + " --checkpoint " +
                             (tmp.file("run1") / "fold0.ckpt").string() +
                             " --tracklet 0 --out " + tmp.file("pred").string(),
                         tmp.path());
  REQUIRE(predict.code == 0);
  auto rec = json::parse(testutil::read_file(tmp.file("pred") / "prediction.json"));
  CHECK(rec.at("tracklet") == 0);
  CHECK(rec.at("observed").size() == 8);
  CHECK(rec.at("true_future").size() == 12);
  CHECK(rec.at("predicted_positions").size() == 12);
  CHECK(rec.at("predicted_actions").size() == 12);

  auto out_of_range = run_cli("predict --archive " + archive + " --checkpoint " +
                                  (tmp.file("run1") / "fold0.ckpt").string() +
                                  " --tracklet 99 --out " + tmp.file("pred2").string(),
                              tmp.path());
  CHECK(out_of_range.code == 2);

  auto bad_ckpt = run_cli("eval --archive " + archive + " --checkpoint " +
                              (tmp.file("run1") / "fold7.ckpt").string() + " --out " +
                              tmp.file("eval_bad").string(),
                          tmp.path());
  CHECK(bad_ckpt.code == 2);
}

TEST_CASE("deterministic training is bit-identical apart from the timestamp") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"), kTrainConfig);
  const std::string cfg = " --config " + tmp.file("cfg.json").string();

  REQUIRE(run_cli("synth" + cfg + " --out " + tmp.file("raw").string(), tmp.path()).code == 0);
  REQUIRE(run_cli("convert --input " + (tmp.file("raw") / "synth.csv").string() + " --out " +
                      tmp.file("data").string(),
                  tmp.path())
              .code == 0);
  const std::string archive = (tmp.file("data") / "tracklets.ndjson").string();

  auto a = run_cli("train --archive " + archive + cfg + " --deterministic --seed 7 --out " +
                       tmp.file("a").string(),
                   tmp.path());
  auto b = run_cli("train --archive " + archive + cfg + " --deterministic --seed 7 --out " +
                       tmp.file("b").string(),
                   tmp.path());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  auto ta = tail_after_header(testutil::read_file(tmp.file("a") / "metrics.ndjson"));
  auto tb = tail_after_header(testutil::read_file(tmp.file("b") / "metrics.ndjson"));
  CHECK(ta == tb);
  // The checkpoints themselves match byte for byte.
  CHECK(testutil::read_file(tmp.file("a") / "fold0.ckpt") ==
        testutil::read_file(tmp.file("b") / "fold0.ckpt"));

  // A different seed actually changes the metrics.
  auto c = run_cli("train --archive " + archive + cfg + " --deterministic --seed 8 --out " +
                       tmp.file("c").string(),
                   tmp.path());
  REQUIRE(c.code == 0);
  auto tc = tail_after_header(testutil::read_file(tmp.file("c") / "metrics.ndjson"));
  CHECK(ta != tc);
}

TEST_CASE("train rejects an archive with too few trajectories for the folds") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("cfg.json"),
                       R"({"synth": {"n_trajectories": 2, "duration_s": 20.0, "seed": 1},
                           "folds": 5})");
  const std::string cfg = " --config " + tmp.file("cfg.json").string();
  REQUIRE(run_cli("synth" + cfg + " --out " + tmp.file("raw").string(), tmp.path()).code == 0);
  REQUIRE(run_cli("convert --input " + (tmp.file("raw") / "synth.csv").string() + " --out " +
                      tmp.file("data").string(),
                  tmp.path())
              .code == 0);
  auto r = run_cli("train --archive " + (tmp.file("data") / "tracklets.ndjson").string() + cfg +
                       " --out " + tmp.file("run").string(),
                   tmp.path());
  CHECK(r.code == 3);
}

int main(int argc, char** argv) {
  if (argc < 2 || argv[1][0] == '-') {
    std::fprintf(stderr, "usage: %s <path-to-trackcast> [doctest args]\n", argv[0]);
    return 1;
  }
  g_binary = argv[1];
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  return ctx.run();
}
