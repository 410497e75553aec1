#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rtriage/classifier.hpp"
#include "rtriage/context.hpp"
#include "rtriage/error.hpp"
#include "rtriage/evaluation.hpp"
#include "rtriage/pipeline.hpp"
#include "rtriage/replay_log.hpp"
#include "rtriage/summarizer.hpp"
#include "rtriage/synth.hpp"

PYBIND11_MAKE_OPAQUE(rtriage::Dataset)

namespace py = pybind11;
using namespace rtriage;
using json = nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

FeatureConfig feature_config(const std::string& mode, const std::string& vectorizer, const py::object& hp) {
  FeatureConfig c;
  c.mode = parse_feature_mode(mode);
  c.vectorizer = parse_vectorizer_kind(vectorizer);
  if (!hp.is_none()) {
    json merged = c.hyperparameters;
    merged.update(from_py(hp));
    c.hyperparameters = merged.get<Hyperparameters>();
  }
  validate(c.hyperparameters);
  return c;
}

// Offline summaries keep the bindings network-free.
struct OfflineSummarizer {
  OfflineEndpoint endpoint;
  Summarizer summarizer{endpoint, {}};
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Replay-failure root-cause triage";

  // Translators run newest first, so the base class is registered first.
  static py::exception<Error> base(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<EndpointError>(m, "EndpointError", base.ptr());

  py::class_<ReplayLog>(m, "Replay")
      .def_static("load", [](const std::filesystem::path& p) { return ingest(p); }, py::arg("path"))
      .def_readonly("replay_id", &ReplayLog::replay_id)
      .def("__len__", [](const ReplayLog& l) { return l.events.size(); })
      .def("failed_event_ids",
           [](const ReplayLog& l) {
             std::vector<std::string> out;
             for (const auto& e : l.events)
               if (e.status == EventStatus::failed) out.push_back(e.event_id);
             return out;
           })
      .def(
          "context",
          [](const ReplayLog& l, const std::string& event_id, std::optional<std::size_t> max_items) {
            return to_py(json(collect(l, event_id, max_items)));
          },
          py::arg("event_id"), py::arg("max_items") = py::none())
      .def("save", [](const ReplayLog& l, const std::filesystem::path& p) { export_log(l, p); }, py::arg("path"))
      .def("to_jsonl", [](const ReplayLog& l) {
        std::ostringstream s;
        write_log(l, s);
        return s.str();
      });

  m.def(
      "generate",
      [](std::uint64_t seed, int overlap_classes, int failed_events) {
        SynthResult r = generate(overlap_scenario(seed, overlap_classes, failed_events));
        return py::make_tuple(std::move(r.log), r.truth);
      },
      py::arg("seed") = 7, py::arg("overlap_classes") = 3, py::arg("failed_events") = 3000,
      "Synthetic overlap scenario; returns (replay, {event_id: label_id}).");

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& p) { return read_dataset(p); }, py::arg("path"))
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { write_dataset(d, p); }, py::arg("path"))
      .def("__len__", [](const Dataset& d) { return d.size(); })
      .def("labels", [](const Dataset& d) {
        std::vector<std::string> out;
        for (const auto& it : d) out.push_back(it.label.label_id);
        return out;
      });

  m.def(
      "build_dataset",
      [](const ReplayLog& log, const GroundTruth& truth) {
        OfflineSummarizer s;
        return build_dataset(log, truth, &s.summarizer);
      },
      py::arg("replay"), py::arg("truth"), "Labeled failed events with offline summaries attached.");

  m.def(
      "summarize",
      [](const ReplayLog& log, const std::string& event_id, int word_limit, std::int64_t token_budget) {
        OfflineEndpoint ep;
        SummarizerOptions opt;
        opt.word_limit = word_limit;
        opt.token_budget = token_budget;
        Summarizer s(ep, opt);
        return to_py(json(s.summarize_chunked(collect(log, event_id))));
      },
      py::arg("replay"), py::arg("event_id"), py::arg("word_limit") = 30, py::arg("token_budget") = 128000);

  m.def(
      "parse_summary_response",
      [](const std::string& raw, int word_limit) {
        FailureSummary s = parse_summary_response(raw);
        const SummaryValidation v = validate_summary(s, word_limit);
        json j = s;
        j["warnings"] = v.warnings;
        j["violations"] = v.violations;
        return to_py(j);
      },
      py::arg("raw"), py::arg("word_limit") = 30);
  m.def("prompt_prefix", &prompt_prefix, py::arg("word_limit") = 30);

  m.def("f1_macro", &f1_macro, py::arg("y_true"), py::arg("y_pred"));
  m.def("accuracy", &accuracy, py::arg("y_true"), py::arg("y_pred"));
  m.def("f1_comb", &f1_comb, py::arg("f1_macro"), py::arg("certainty"));

  m.def(
      "cross_validate",
      [](const Dataset& data, const std::string& mode, const std::string& vectorizer, std::uint64_t seed,
         const py::object& hp, int jobs) {
        const FeatureConfig cfg = feature_config(mode, vectorizer, hp);
        CvReport r;
        {
          py::gil_scoped_release release;
          r = cross_validate(data, cfg, seed, jobs);
        }
        return to_py(json(r));
      },
      py::arg("dataset"), py::arg("mode") = "em_ss", py::arg("vectorizer") = "tfidf", py::arg("seed") = 7,
      py::arg("hyperparameters") = py::none(), py::arg("jobs") = 1);

  m.def(
      "compare",
      [](const Dataset& data, std::vector<std::string> modes, std::vector<std::string> vectorizers,
         std::uint64_t seed) {
        CompareOptions opt;
        opt.seed = seed;
        if (!modes.empty()) {
          opt.modes.clear();
          for (const auto& s : modes) opt.modes.push_back(parse_feature_mode(s));
        }
        if (!vectorizers.empty()) {
          opt.vectorizers.clear();
          for (const auto& s : vectorizers) opt.vectorizers.push_back(parse_vectorizer_kind(s));
        }
        std::vector<CompareRow> rows;
        {
          py::gil_scoped_release release;
          rows = compare(data, opt);
        }
        return py::make_tuple(to_py(json(rows)), format_compare_table(rows));
      },
      py::arg("dataset"), py::arg("modes") = std::vector<std::string>{},
      py::arg("vectorizers") = std::vector<std::string>{}, py::arg("seed") = 7,
      "Returns (rows, formatted table).");

  py::class_<ModelSnapshot>(m, "Model")
      .def_static(
          "train",
          [](const Dataset& data, const std::string& mode, const std::string& vectorizer, const std::string& version,
             const py::object& hp) { return train_snapshot(data, feature_config(mode, vectorizer, hp), version); },
          py::arg("dataset"), py::arg("mode") = "em_ss", py::arg("vectorizer") = "tfidf", py::arg("version") = "v1",
          py::arg("hyperparameters") = py::none())
      .def_static("load", [](const std::filesystem::path& p) { return load_snapshot(p); }, py::arg("path"))
      .def("save", [](const ModelSnapshot& s, const std::filesystem::path& p) { save_snapshot(s, p); },
           py::arg("path"))
      .def_readonly("version", &ModelSnapshot::version)
      .def_property_readonly("feature_mode", [](const ModelSnapshot& s) { return std::string(to_string(s.feature_mode)); })
      .def_property_readonly("problem_group", [](const ModelSnapshot& s) { return s.problem_group_ids; })
      .def("__len__", [](const ModelSnapshot& s) { return s.items.size(); })
      .def(
          "classify",
          [](const ModelSnapshot& s, const ReplayLog& log) {
            OfflineSummarizer sum;
            const ReplayClassification rc =
                classify_replay(s, log, uses_summary(s.feature_mode) ? &sum.summarizer : nullptr);
            return to_py(json(rc.predictions));
          },
          py::arg("replay"), "Predictions for every failed event, in log order.");
}
