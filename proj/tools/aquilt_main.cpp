#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "aquilt/error.hpp"
#include "aquilt/evalkit.hpp"
#include "aquilt/pipeline.hpp"
#include "aquilt/util.hpp"

namespace {

using aquilt::pipeline::Pipeline;
using aquilt::pipeline::RunConfig;
using aquilt::pipeline::StageReport;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::optional<std::string> out;
};

RunConfig configure(const Overrides& o) {
  auto cfg = aquilt::pipeline::load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.seed_defaulted = false;
    cfg.fingerprint["seed"] = *o.seed;
  }
  if (o.parallelism) {
    if (*o.parallelism == 0) throw aquilt::ValidationError("--parallelism", "must be positive");
    cfg.parallelism = *o.parallelism;
  }
  if (o.out) cfg.output_dir = *o.out;
  return cfg;
}

void print(const StageReport& r) {
  std::cout << r.stage << (r.skipped ? " (unchanged, skipped) " : " ") << r.counts.dump()
            << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const aquilt::ValidationError*>(&e)) return 2;
  if (dynamic_cast<const aquilt::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const aquilt::DependencyError*>(&e)) return 3;
  if (dynamic_cast<const aquilt::PreconditionError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("aquilt");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"aquilt: instruction data synthesis and curation"};
  app.require_subcommand(1);
  Overrides o;
  bool verbose = false;
  app.add_option("--config", o.config, "Run configuration (JSON)");
  app.add_option("--seed", o.seed, "Override the configured seed");
  app.add_option("--parallelism", o.parallelism, "Bound on concurrent backend calls");
  app.add_option("--out", o.out, "Override the run directory");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::function<std::vector<StageReport>(Pipeline&)> action;
  auto stage = [&](const char* name, const char* help, auto fn) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&action, fn] { action = [fn](Pipeline& p) { return fn(p); }; });
    return sub;
  };
  auto one = [](StageReport r) { return std::vector<StageReport>{std::move(r)}; };

  stage("ingest", "Load corpus sources and seeds", [one](Pipeline& p) { return one(p.ingest()); });
  stage("pair", "Sample (record, task) pairings", [one](Pipeline& p) { return one(p.pair()); });

  std::string synth_stage = "distilled";
  auto* synth = stage("synthesize", "Generate quintuples", [one, &synth_stage](Pipeline& p) {
    return one(p.synthesize(aquilt::synthesis::parse_stage(synth_stage)));
  });
  synth->add_option("--stage", synth_stage, "distilled or candidate")
      ->check(CLI::IsMember({"distilled", "candidate"}));

  stage("supplement-logic", "Add reasoning to labeled seeds",
        [one](Pipeline& p) { return one(p.supplement_logic()); });

  std::string inspect_role = "strong";
  auto* insp = stage("inspect", "Score candidates 1 to 5", [one, &inspect_role](Pipeline& p) {
    return one(p.inspect(inspect_role));
  });
  insp->add_option("--role", inspect_role, "strong or synthesizer")
      ->check(CLI::IsMember({"strong", "synthesizer"}));

  std::string threshold_role = "synthesizer";
  auto* filt = stage("filter", "Relevance, bias and threshold filtering",
                     [one, &threshold_role](Pipeline& p) { return one(p.filter(threshold_role)); });
  filt->add_option("--scores", threshold_role, "Which scored set the threshold applies to")
      ->check(CLI::IsMember({"strong", "synthesizer"}));

  stage("assemble", "Downsample and build SFT pairs",
        [one](Pipeline& p) { return one(p.assemble()); });
  stage("export", "Write SFT JSONL with manifests",
        [one](Pipeline& p) { return one(p.export_datasets()); });
  stage("stats", "Print the dataset composition table", [](Pipeline& p) {
    auto r = p.stats();
    std::cout << r.counts.at("table").get<std::string>();
    r.counts.erase("table");
    return std::vector<StageReport>{std::move(r)};
  });

  std::string audit_input;
  auto* aud = stage("audit", "Judge whether questions stand alone", [one, &audit_input](Pipeline& p) {
    return one(audit_input.empty() ? p.audit() : p.audit(std::filesystem::path(audit_input)));
  });
  aud->add_option("--input", audit_input, "Quintuple JSONL (default: candidate quintuples)");

  stage("run", "Run every stage in order", [](Pipeline& p) { return p.run_all(); });

  std::string eval_input;
  std::string eval_report;
  auto* ev = app.add_subcommand("eval", "Score predictions against references");
  ev->add_option("--input", eval_input, "Eval JSONL")->required();
  ev->add_option("--report", eval_report, "Write the JSON report here");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (ev->parsed()) {
      const auto records = aquilt::evalkit::load_eval_jsonl(eval_input);
      const auto report = aquilt::evalkit::to_json(aquilt::evalkit::evaluate(records));
      if (!eval_report.empty()) {
        aquilt::io::write_file_atomic(eval_report, report.dump(2) + "\n");
      }
      std::cout << report.dump(2) << "\n";
      return 0;
    }
    if (o.config.empty()) throw aquilt::ValidationError("--config", "required for this command");
    Pipeline pipeline(configure(o));
    for (const auto& r : action(pipeline)) print(r);
    return 0;
  } catch (const aquilt::ValidationError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return exit_code_for(e);
  } catch (const aquilt::DependencyError& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
}
