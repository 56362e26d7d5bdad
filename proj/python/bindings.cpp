#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "aquilt/dataset.hpp"
#include "aquilt/error.hpp"
#include "aquilt/evalkit.hpp"
#include "aquilt/pipeline.hpp"
#include "aquilt/quality.hpp"
#include "aquilt/synthesis.hpp"
#include "aquilt/util.hpp"

namespace py = pybind11;
using namespace aquilt;

namespace {

synthesis::Schema schema_named(const std::string& name) {
  if (name == "generation") return synthesis::Schema::GenerationTriple;
  if (name == "inspection") return synthesis::Schema::InspectionPair;
  if (name == "yes-no") return synthesis::Schema::YesNo;
  if (name == "logic") return synthesis::Schema::Logic;
  throw ConfigError("unknown schema '" + name + "'");
}

evalkit::ChoiceMode mode_named(const std::string& name) {
  if (name == "single") return evalkit::ChoiceMode::Single;
  if (name == "multiple") return evalkit::ChoiceMode::Multiple;
  if (name == "yes-no-maybe") return evalkit::ChoiceMode::YesNoMaybe;
  throw ConfigError("unknown choice mode '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the aquilt toolkit";

  auto base = py::register_exception<Error>(m, "AquiltError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());

  m.def("normalize_answer", &evalkit::normalize_answer, py::arg("text"));
  m.def(
      "squad_f1",
      [](const std::string& prediction, const std::vector<std::string>& references) {
        return evalkit::squad_f1(prediction, references);
      },
      py::arg("prediction"), py::arg("references"));
  m.def(
      "exact_match",
      [](const std::string& prediction, const std::vector<std::string>& references) {
        return evalkit::exact_match(prediction, references);
      },
      py::arg("prediction"), py::arg("references"));
  m.def("rouge_l", &evalkit::rouge_l, py::arg("prediction"), py::arg("reference"));
  m.def(
      "choice_accuracy",
      [](const std::string& prediction, const std::string& gold, const std::string& mode,
         std::size_t option_count) {
        return evalkit::choice_accuracy(prediction, gold, mode_named(mode), option_count);
      },
      py::arg("prediction"), py::arg("gold"), py::arg("mode") = "single",
      py::arg("option_count") = 4);
  m.def(
      "evaluate_file",
      [](const std::filesystem::path& path) {
        const auto records = evalkit::load_eval_jsonl(path);
        return evalkit::to_json(evalkit::evaluate(records)).dump();
      },
      py::arg("path"), "Returns the eval report as a JSON string.");

  m.def(
      "extract_structured",
      [](const std::string& text, const std::string& schema) {
        return synthesis::extract_structured(text, schema_named(schema)).dump();
      },
      py::arg("text"), py::arg("schema"), "Returns the normalized payload as a JSON string.");

  m.def("select_cutoff", &quality::select_cutoff, py::arg("total"), py::arg("score2"));
  m.def("minimal_removals", &quality::minimal_removals, py::arg("count"), py::arg("total"),
        py::arg("threshold"));

  m.def("sha256_hex", [](const std::string& s) { return sha256_hex(s); }, py::arg("data"));

  m.def(
      "run_pipeline",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> out) {
        auto cfg = pipeline::load_config(config);
        if (out) cfg.output_dir = *out;
        std::vector<std::string> reports;
        {
          py::gil_scoped_release release;
          pipeline::Pipeline p(std::move(cfg));
          for (const auto& r : p.run_all()) {
            reports.push_back(nlohmann::json{{"stage", r.stage}, {"skipped", r.skipped},
                                             {"counts", r.counts}}
                                  .dump());
          }
        }
        return reports;
      },
      py::arg("config"), py::arg("out") = py::none(),
      "Runs every stage; returns one JSON string per stage report.");

  m.def(
      "render_stats",
      [](const std::vector<std::filesystem::path>& manifests) {
        dataset::DatasetStats stats;
        for (const auto& p : manifests) {
          stats.add(dataset::manifest_from_json(nlohmann::json::parse(io::read_file(p))));
        }
        return dataset::summarize(stats);
      },
      py::arg("manifests"));
}
