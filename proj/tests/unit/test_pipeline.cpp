#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "aquilt/error.hpp"
#include "aquilt/pipeline.hpp"
#include "aquilt/util.hpp"
#include "testsupport.hpp"

using namespace aquilt;
using namespace aquilt::pipeline;
using nlohmann::json;

namespace {

json toy_config() {
  auto j = json::parse(io::read_file(aquilt::testing::source_dir() / "data/toy/config.json"));
  j["pairing"]["synthesis_count"] = 120;
  j["pairing"]["candidate_count"] = 60;
  return j;
}

RunConfig config_in(const aquilt::testing::TempDir& dir, json j = toy_config()) {
  j["output_dir"] = (dir / "run").string();
  return parse_config(j, aquilt::testing::source_dir() / "data/toy");
}

std::string field_path_of(const json& j) {
  try {
    parse_config(j, aquilt::testing::source_dir() / "data/toy");
  } catch (const ValidationError& e) {
    return e.field_path();
  }
  return "<accepted>";
}

std::map<std::string, std::string> tree_hashes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[std::filesystem::relative(e.path(), root).string()] = sha256_hex(io::read_file(e.path()));
    }
  }
  return out;
}

}  // namespace

TEST(Config, ParsesToy) {
  aquilt::testing::TempDir dir;
  const auto c = config_in(dir);
  EXPECT_EQ(c.seed, 20250101u);
  EXPECT_FALSE(c.seed_defaulted);
  EXPECT_EQ(c.sources.size(), 2u);
  EXPECT_EQ(c.novel_tasks.size(), 1u);
  EXPECT_EQ(c.role("strong").model_name, "mock-strong");
  EXPECT_FALSE(c.fingerprint.contains("output_dir"));
  EXPECT_FALSE(c.fingerprint.contains("parallelism"));
}

TEST(Config, SeedDefaulted) {
  auto j = toy_config();
  j.erase("seed");
  const auto c = parse_config(j, aquilt::testing::source_dir() / "data/toy");
  EXPECT_TRUE(c.seed_defaulted);
  EXPECT_EQ(c.seed, kDefaultSeed);
  EXPECT_EQ(c.fingerprint.at("seed"), kDefaultSeed);
}

TEST(Config, FieldPaths) {
  auto j = toy_config();
  j["backends"]["strong"]["sampling"] = {{"temperature", -1}};
  EXPECT_EQ(field_path_of(j), "backends.strong.sampling.temperature");

  j = toy_config();
  j["backends"].erase("judge");
  EXPECT_EQ(field_path_of(j), "backends.judge");

  j = toy_config();
  j["task_weights"]["default"]["poetry"] = 1;
  EXPECT_EQ(field_path_of(j), "task_weights.default.poetry");

  j = toy_config();
  j["thresholds"]["bias"] = 1.5;
  EXPECT_EQ(field_path_of(j), "thresholds.bias");

  j = toy_config();
  j["parallelism"] = 0;
  EXPECT_EQ(field_path_of(j), "parallelism");

  j = toy_config();
  j["novel_tasks"][0].erase("prefix");
  EXPECT_EQ(field_path_of(j), "novel_tasks[0].prefix");

  EXPECT_EQ(field_path_of(json::array()), "$");
}

TEST(Commands, Names) {
  for (auto c : {Command::Ingest, Command::Pair, Command::Synthesize, Command::SupplementLogic,
                 Command::Inspect, Command::Filter, Command::Assemble, Command::Export,
                 Command::Stats, Command::Audit, Command::Eval}) {
    EXPECT_EQ(parse_command(to_string(c)), c);
  }
  EXPECT_EQ(to_string(Command::SupplementLogic), "supplement-logic");
  EXPECT_THROW(parse_command("train"), ConfigError);
}

TEST(Stages, MissingInputIsDependencyError) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  EXPECT_THROW(p.pair(), DependencyError);
  p.ingest();
  try {
    p.synthesize(synthesis::Stage::Distilled);
    FAIL();
  } catch (const DependencyError& e) {
    EXPECT_EQ(e.stage(), "pair");
  }
}

TEST(Stages, LockIsExclusive) {
  aquilt::testing::TempDir dir;
  std::filesystem::create_directories(dir / "run");
  RunLock held(dir / "run");
  EXPECT_THROW(RunLock(dir / "run"), PreconditionError);
  Pipeline p(config_in(dir));
  EXPECT_THROW(p.ingest(), PreconditionError);
}

TEST(Stages, RerunIsNoOp) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  const auto first = p.run_all();
  for (const auto& r : first) EXPECT_FALSE(r.skipped) << r.stage;
  const auto before = tree_hashes(dir / "run");
  const auto second = p.run_all();
  for (const auto& r : second) EXPECT_TRUE(r.skipped) << r.stage;
  EXPECT_EQ(tree_hashes(dir / "run"), before);
}

TEST(Stages, ChangedInputReruns) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  p.ingest();
  p.pair();
  auto rows = io::read_file(dir / "run/pairings/synthesis.jsonl");
  rows = rows.substr(0, rows.find('\n') + 1);
  io::write_file_atomic(dir / "run/pairings/synthesis.jsonl", rows);
  EXPECT_FALSE(p.pair().skipped);
  EXPECT_TRUE(p.pair().skipped);
}

TEST(Stages, DeterministicAcrossRunsAndParallelism) {
  aquilt::testing::TempDir a, b;
  Pipeline(config_in(a)).run_all();
  auto cfg = toy_config();
  cfg["parallelism"] = 1;
  Pipeline(config_in(b, cfg)).run_all();
  const auto ha = tree_hashes(a / "run"), hb = tree_hashes(b / "run");
  EXPECT_EQ(ha, hb);
  EXPECT_TRUE(ha.contains("sft/synthesis.jsonl"));
  EXPECT_TRUE(ha.contains("manifest.json"));
}

TEST(Stages, SeedChangesOutput) {
  aquilt::testing::TempDir a, b;
  Pipeline(config_in(a)).run_all();
  auto cfg = toy_config();
  cfg["seed"] = 7;
  Pipeline(config_in(b, cfg)).run_all();
  EXPECT_NE(io::read_file(a / "run/pairings/synthesis.jsonl"),
            io::read_file(b / "run/pairings/synthesis.jsonl"));
}

TEST(Stages, FilterReportsAppliedCutoff) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  p.ingest();
  p.pair();
  p.synthesize(synthesis::Stage::Distilled);

  // One group with p2 = 0.30, one with p2 = 0.
  std::string rows;
  for (int i = 0; i < 20; ++i) {
    synthesis::QuintupleRecord r;
    r.id = "s" + std::to_string(i);
    r.task = taskspec::builtin(i < 10 ? taskspec::TaskType::Nli : taskspec::TaskType::Summarization);
    r.question = "q";
    r.score = i < 3 ? 2 : (i < 10 ? 4 : 1 + i % 5);
    rows += synthesis::to_json(r).dump() + "\n";
  }
  std::filesystem::create_directories(dir / "run/scored");
  io::write_file_atomic(dir / "run/scored/synthesizer.jsonl", rows);

  const auto report = p.filter();
  const auto& groups = report.counts.at("threshold").at("groups");
  ASSERT_EQ(groups.size(), 2u);
  std::map<std::string, int> cutoffs;
  for (const auto& g : groups) cutoffs[g["group"]["task"]] = g["applied_cutoff"];
  EXPECT_EQ(cutoffs["nli"], 1);
  EXPECT_EQ(cutoffs["summarization"], 2);
  EXPECT_EQ(report.counts["threshold"]["kept"], 10 + 6);
}

TEST(Stages, StatsTableAndCounts) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  p.run_all();
  const auto s = p.stats();
  const std::string table = s.counts.at("table");
  EXPECT_NE(table.find("Closed-Book QA"), std::string::npos);
  EXPECT_NE(table.find("Self-Inspection"), std::string::npos);
  const auto m = p.manifest();
  for (const auto* stage : {"ingest", "pair", "synthesize:distilled", "filter", "export"}) {
    EXPECT_TRUE(m["stages"].contains(stage)) << stage;
  }
  EXPECT_EQ(m.at("seed"), 20250101);
}

TEST(Stages, PairingPartition) {
  aquilt::testing::TempDir dir;
  Pipeline p(config_in(dir));
  p.ingest();
  const auto r = p.pair();
  EXPECT_EQ(r.counts.at("synthesis"), 120);
  EXPECT_EQ(r.counts.at("candidate"), 60);
}
