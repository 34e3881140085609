#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "p2t/answer_parser.hpp"
#include "p2t/baselines.hpp"
#include "p2t/errors.hpp"
#include "p2t/experiment.hpp"
#include "p2t/pipeline.hpp"

namespace py = pybind11;
using namespace p2t;

namespace {

// nlohmann::json <-> Python via the json module; reports and specs are small.
py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<Row> pick(const TableDataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<Row> rows;
  for (std::size_t i : indices) rows.push_back(ds.rows.at(i));
  return rows;
}

std::vector<Row> without_labels(std::vector<Row> rows, const DatasetSchema& schema) {
  for (Row& r : rows) r.cells[schema.target_index()] = Missing{};
  return rows;
}

SerializationMode serialization(bool generic) {
  return generic ? SerializationMode::kGeneric : SerializationMode::kDescriptive;
}

py::object cell_to_python(const Cell& cell) {
  if (is_missing(cell)) return py::none();
  if (const auto* n = std::get_if<Numeric>(&cell)) return py::float_(n->value);
  return py::str(std::get<Category>(cell).code);
}

py::object parsed_to_python(const ParsedAnswer& answer) {
  if (const auto* c = std::get_if<ClassAnswer>(&answer)) return py::make_tuple(c->index, c->token);
  if (const auto* f = std::get_if<FeatureAnswer>(&answer)) return py::make_tuple(f->index, f->name);
  if (const auto* n = std::get_if<NumberAnswer>(&answer)) return py::float_(n->value);
  return py::none();
}

ExperimentSpec spec_from(const py::object& spec, const std::filesystem::path& base_dir) {
  if (py::isinstance<py::dict>(spec)) return ExperimentSpec::from_json(from_python(spec), base_dir);
  return ExperimentSpec::load(spec.cast<std::filesystem::path>());
}

}  // namespace

PYBIND11_MODULE(_p2t, m) {
  m.doc() = "Prompt to Transfer: prompt construction, answer parsing, baselines and experiment runs";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<BudgetExceeded>(m, "BudgetExceeded", base.ptr());

  py::class_<TableDataset>(m, "Dataset")
      .def_static("load", [](const std::filesystem::path& csv, const std::filesystem::path& schema) {
        return load_csv(csv, schema);
      }, py::arg("csv"), py::arg("schema"))
      .def("__len__", [](const TableDataset& ds) { return ds.rows.size(); })
      .def_property_readonly("columns", [](const TableDataset& ds) {
        std::vector<std::string> names;
        for (const auto& c : ds.schema.columns) names.push_back(c.name);
        return names;
      })
      .def_property_readonly("target", [](const TableDataset& ds) { return ds.schema.target; })
      .def_property_readonly("class_tokens", [](const TableDataset& ds) { return ds.schema.class_tokens(); })
      .def_property_readonly("schema", [](const TableDataset& ds) { return to_python(ds.schema.to_json()); })
      .def("row", [](const TableDataset& ds, std::size_t i) {
        py::list out;
        for (const Cell& cell : ds.rows.at(i).cells) out.append(cell_to_python(cell));
        return out;
      }, py::arg("index"), "Cell values of a row; None marks a missing cell.")
      .def("row_class", [](const TableDataset& ds, std::size_t i) {
        return row_class(ds.rows.at(i), ds.schema);
      }, py::arg("index"));

  m.def("icl_prompt", [](const TableDataset& ds, const std::vector<std::size_t>& shots,
                         std::size_t test, bool generic) {
    return build_icl_prompt(pick(ds, shots), ds.rows.at(test), ds.schema, serialization(generic)).text();
  }, py::arg("dataset"), py::arg("shots"), py::arg("test"), py::arg("generic") = false);

  m.def("correlation_prompt", [](const TableDataset& ds, const std::vector<std::size_t>& shots,
                                 const TableDataset* source, bool generic) {
    const DatasetSchema& source_schema = source ? source->schema : ds.schema;
    return build_correlation_prompt(pick(ds, shots), source_schema, ds.schema, serialization(generic)).text();
  }, py::arg("dataset"), py::arg("shots"), py::arg("source") = nullptr, py::arg("generic") = false);

  m.def("p2t_prompt", [](const TableDataset& ds, const std::vector<std::size_t>& shots, std::size_t test,
                         const std::string& f_k, const std::vector<std::size_t>& pool,
                         const TableDataset* source, const py::dict& mode) {
    PipelineMode pm = PipelineMode::from_json(from_python(mode));
    std::vector<Row> source_rows;
    const DatasetSchema* source_schema = &ds.schema;
    if (source) {
      source_rows = source->rows;
      source_schema = &source->schema;
      pm.source = SourceKind::kHeterogeneous;
    } else {
      source_rows = without_labels(pick(ds, pool), ds.schema);
    }
    const auto shot_rows = pick(ds, shots);
    const auto pseudo = build_pseudo_demos(shot_rows, ds.schema, source_rows, *source_schema, f_k, pm);
    return build_p2t_prompt(shot_rows, pseudo.segments, ds.rows.at(test), ds.schema, pm.serialization).text();
  }, py::arg("dataset"), py::arg("shots"), py::arg("test"), py::arg("f_k"),
     py::arg("pool") = std::vector<std::size_t>{}, py::arg("source") = nullptr,
     py::arg("mode") = py::dict(),
     "P2T prompt. Pseudo-demonstrations come from the unlabeled `pool` rows of the dataset, "
     "or from every row of `source` when given.");

  m.def("conventional_identify", [](const TableDataset& ds, const std::vector<std::size_t>& rows,
                                    const std::vector<std::string>& candidates) {
    return conventional_identify(pick(ds, rows), ds.schema, candidates);
  }, py::arg("dataset"), py::arg("rows"), py::arg("candidates"));

  m.def("normalize_for_golden", &normalize_for_golden, py::arg("text"));
  m.def("parse_class", [](std::string_view r, const std::vector<std::string>& tokens) {
    return parsed_to_python(parse_class(r, tokens));
  }, py::arg("response"), py::arg("tokens"), "(index, token) or None.");
  m.def("parse_feature", [](std::string_view r, const std::vector<std::string>& choices) {
    return parsed_to_python(parse_feature(r, choices));
  }, py::arg("response"), py::arg("choices"), "(index, choice) or None.");
  m.def("parse_number", [](std::string_view r) { return parsed_to_python(parse_number(r)); },
        py::arg("response"));
  m.def("cache_key", [](std::string_view prompt, std::string_view model, double temperature, int max_tokens) {
    return cache_key(prompt, model, {temperature, max_tokens});
  }, py::arg("prompt"), py::arg("model") = "gpt-3.5-turbo", py::arg("temperature") = 0.0,
     py::arg("max_tokens") = kClassificationMaxTokens);
  m.def("estimate_tokens", &estimate_tokens, py::arg("text"));

  m.def("knn_predict", &knn_fit_predict, py::arg("train"), py::arg("labels"), py::arg("queries"),
        py::arg("k") = 1);
  m.def("logistic_predict", [](const Matrix& xs, const Labels& ys, const Matrix& queries,
                               std::size_t num_classes, double l2, double lr, std::size_t epochs) {
    return logistic_fit(xs, ys, num_classes, {l2, lr, epochs}).predict(queries);
  }, py::arg("train"), py::arg("labels"), py::arg("queries"), py::arg("num_classes") = 2,
     py::arg("l2") = 1e-4, py::arg("learning_rate") = 0.1, py::arg("epochs") = 500);

  m.def("run", [](const py::object& spec, const std::filesystem::path& base_dir,
                  std::optional<ScriptFn> script) {
    const ExperimentSpec s = spec_from(spec, base_dir);
    RunReport report;
    RunStats stats;
    {
      py::gil_scoped_release release;
      if (script) {
        auto client = LlmClient::scripted(s.backend.value_or(BackendConfig{}), *script);
        report = run(s, &client, &stats);
      } else {
        report = run(s, nullptr, &stats);
      }
    }
    py::dict out = to_python(report.to_json());
    out["network_calls"] = stats.network_calls;
    return out;
  }, py::arg("spec"), py::arg("base_dir") = std::filesystem::path(), py::arg("script") = py::none(),
     "Runs an experiment spec (path or dict). `script` maps a prompt to a reply and replaces the "
     "configured backend.");

  m.def("dump_prompts", [](const py::object& spec, const std::filesystem::path& dir,
                           const std::filesystem::path& base_dir) {
    std::vector<std::string> paths;
    for (const auto& p : dump_prompts(spec_from(spec, base_dir), dir)) paths.push_back(p.string());
    return paths;
  }, py::arg("spec"), py::arg("dir"), py::arg("base_dir") = std::filesystem::path());
}
