#include "p2t/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "p2t/errors.hpp"
#include "p2t/random.hpp"
#include "p2t/sampling.hpp"

namespace p2t {
namespace {

int default_max_tokens(const DatasetSchema& schema) {
  return schema.task_kind == TaskKind::kClassification ? kClassificationMaxTokens
                                                       : kRegressionMaxTokens;
}

std::vector<PromptSegment> labeled_segments(std::span<const Row> shots, const DatasetSchema& schema,
                                            SerializationMode mode) {
  std::vector<PromptSegment> out;
  out.reserve(shots.size());
  for (const Row& row : shots) out.push_back(render_labeled_demo(row, schema, mode));
  return out;
}

std::vector<std::string> candidate_labels(const DatasetSchema& source_schema,
                                          const std::vector<std::string>& candidates,
                                          SerializationMode mode) {
  std::vector<std::string> labels;
  for (const auto& name : candidates) {
    labels.push_back(column_label(source_schema, source_schema.index_of(name), mode));
  }
  return labels;
}

bool renderable(const Row& row, const DatasetSchema& schema, std::size_t f_k) {
  if (is_missing(row.cells.at(f_k))) return false;
  const std::size_t target = schema.target_index();
  for (std::size_t c = 0; c < row.cells.size(); ++c) {
    if (c != f_k && c != target && !is_missing(row.cells[c])) return true;
  }
  return false;
}

template <typename Enum>
Enum parse_enum(const nlohmann::json& j, const char* key, Enum fallback,
                std::initializer_list<std::pair<const char*, Enum>> names) {
  if (!j.contains(key)) return fallback;
  const auto text = j.at(key).get<std::string>();
  for (const auto& [name, value] : names) {
    if (text == name) return value;
  }
  throw ConfigError(std::string("unknown ") + key + " '" + text + "'");
}

}  // namespace

void PipelineMode::validate() const {
  if (prediction == PredictionMethod::kP2T && source == SourceKind::kNone) {
    throw ConfigError("p2t needs a transfer source");
  }
  if (prediction == PredictionMethod::kP2T && source == SourceKind::kUnlabeledSame &&
      target_selection.kind == TargetSelection::Kind::kSourceLabel) {
    throw ConfigError("source_label target selection needs a heterogeneous source");
  }
  if (target_selection.kind == TargetSelection::Kind::kFixed && target_selection.column.empty()) {
    throw ConfigError("fixed target selection needs a column");
  }
}

PipelineMode PipelineMode::from_json(const nlohmann::json& j) {
  using K = TargetSelection::Kind;
  PipelineMode mode;
  try {
    mode.prediction = parse_enum(j, "prediction", mode.prediction,
                                 {{"icl_baseline", PredictionMethod::kIclBaseline},
                                  {"p2t", PredictionMethod::kP2T}});
    mode.shots = j.value("shots", mode.shots);
    mode.source = parse_enum(j, "source", mode.source,
                             {{"none", SourceKind::kNone},
                              {"unlabeled_same", SourceKind::kUnlabeledSame},
                              {"heterogeneous", SourceKind::kHeterogeneous}});
    if (j.contains("target_selection")) {
      const auto& ts = j.at("target_selection");
      mode.target_selection.kind = parse_enum(ts, "kind", K::kLlmIdentified,
                                              {{"llm_identified", K::kLlmIdentified},
                                               {"fixed", K::kFixed},
                                               {"random", K::kRandom},
                                               {"conventional", K::kConventional},
                                               {"source_label", K::kSourceLabel}});
      mode.target_selection.column = ts.value("column", std::string());
      mode.target_selection.seed = ts.value("seed", std::uint64_t{0});
    }
    mode.serialization = parse_enum(j, "serialization", mode.serialization,
                                    {{"descriptive", SerializationMode::kDescriptive},
                                     {"generic", SerializationMode::kGeneric}});
    mode.neighbors_per_shot = j.value("neighbors_per_shot", mode.neighbors_per_shot);
    mode.zero_shot_source_n = j.value("zero_shot_source_n", mode.zero_shot_source_n);
    mode.heterogeneous_n = j.value("heterogeneous_n", mode.heterogeneous_n);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pipeline mode: ") + e.what());
  }
  mode.validate();
  return mode;
}

nlohmann::json PipelineMode::to_json() const {
  static constexpr const char* kSelection[] = {"llm_identified", "fixed", "random",
                                               "conventional", "source_label"};
  static constexpr const char* kSource[] = {"none", "unlabeled_same", "heterogeneous"};
  return {{"prediction", prediction == PredictionMethod::kP2T ? "p2t" : "icl_baseline"},
          {"shots", shots},
          {"source", kSource[static_cast<int>(source)]},
          {"target_selection",
           {{"kind", kSelection[static_cast<int>(target_selection.kind)]},
            {"column", target_selection.column},
            {"seed", target_selection.seed}}},
          {"serialization",
           serialization == SerializationMode::kDescriptive ? "descriptive" : "generic"},
          {"neighbors_per_shot", neighbors_per_shot},
          {"zero_shot_source_n", zero_shot_source_n},
          {"heterogeneous_n", heterogeneous_n}};
}

std::string_view to_string(FeatureSelection::Origin origin) {
  switch (origin) {
    case FeatureSelection::Origin::kLlm: return "llm";
    case FeatureSelection::Origin::kLlmRetry: return "llm_retry";
    case FeatureSelection::Origin::kFallback: return "fallback";
    case FeatureSelection::Origin::kFixed: return "fixed";
    case FeatureSelection::Origin::kRandom: return "random";
    case FeatureSelection::Origin::kConventional: return "conventional";
    case FeatureSelection::Origin::kSourceLabel: return "source_label";
  }
  return "unknown";
}

std::vector<std::string> candidate_features(const DatasetSchema& source_schema) {
  std::vector<std::string> out;
  for (std::size_t c : source_schema.feature_indices()) out.push_back(source_schema.columns[c].name);
  return out;
}

AssembledPrompt build_correlation_prompt(std::span<const Row> shots,
                                         const DatasetSchema& source_schema,
                                         const DatasetSchema& target_schema,
                                         SerializationMode mode, bool retry_hint) {
  const auto labels = candidate_labels(source_schema, candidate_features(source_schema), mode);
  auto instruction = render_correlation_instruction(labels, target_schema, mode, retry_hint);
  std::vector<PromptSegment> segments{instruction.opening};
  if (shots.empty()) {
    segments.push_back(render_task_description(target_schema, mode));
  } else {
    for (auto& s : labeled_segments(shots, target_schema, mode)) segments.push_back(std::move(s));
  }
  segments.push_back(instruction.closing);
  return assemble(std::move(segments));
}

FeatureSelection identify_correlated_feature(std::span<const Row> shots,
                                             const DatasetSchema& source_schema,
                                             const DatasetSchema& target_schema,
                                             LlmClient& client, SerializationMode mode,
                                             std::span<const Row> fallback_rows) {
  const auto candidates = candidate_features(source_schema);
  if (candidates.empty()) throw NoCandidateFeatures("source schema has no candidate feature");
  const auto labels = candidate_labels(source_schema, candidates, mode);
  const DecodeParams params = client.config().decode(kClassificationMaxTokens);

  FeatureSelection sel;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto prompt =
        build_correlation_prompt(shots, source_schema, target_schema, mode, attempt == 1);
    const Completion reply = client.complete(prompt.text(), params);
    sel.prompts.push_back(prompt.text());
    sel.responses.push_back(reply.text);
    const ParsedAnswer parsed = parse_feature(reply.text, labels);
    if (const auto* feature = std::get_if<FeatureAnswer>(&parsed)) {
      sel.column = candidates[feature->index];
      sel.origin = attempt == 0 ? FeatureSelection::Origin::kLlm : FeatureSelection::Origin::kLlmRetry;
      return sel;
    }
  }
  sel.column = conventional_identify(fallback_rows.empty() ? shots : fallback_rows, target_schema,
                                     candidates);
  sel.origin = FeatureSelection::Origin::kFallback;
  return sel;
}

PseudoDemoSet build_pseudo_demos(std::span<const Row> shots, const DatasetSchema& target_schema,
                                 std::span<const Row> source_rows,
                                 const DatasetSchema& source_schema, std::string_view f_k,
                                 const PipelineMode& mode) {
  const std::size_t fk = source_schema.index_of(f_k);
  std::vector<Row> eligible;
  for (const Row& row : source_rows) {
    if (renderable(row, source_schema, fk)) eligible.push_back(row);
  }
  if (eligible.empty()) {
    throw EmptyPseudoSet("no source row has a value for '" + std::string(f_k) + "'");
  }

  PseudoDemoSet set;
  if (shots.empty()) {
    set.rows = sample_source_rows(eligible, mode.zero_shot_source_n, derive_seed(mode.seed, 1));
  } else if (mode.source == SourceKind::kHeterogeneous) {
    set.rows = sample_source_rows(eligible, mode.heterogeneous_n, derive_seed(mode.seed, 2));
  } else {
    std::vector<Row> fit_rows(shots.begin(), shots.end());
    fit_rows.insert(fit_rows.end(), eligible.begin(), eligible.end());
    const auto encoder = FeatureEncoder::fit(target_schema, fit_rows);
    std::set<std::size_t> seen;
    for (const Row& shot : shots) {
      const auto nn = nearest_unlabeled(shot, eligible, mode.neighbors_per_shot, encoder);
      set.truncated = set.truncated || nn.truncated;
      for (std::size_t i : nn.indices) {
        if (seen.insert(eligible[i].id).second) set.rows.push_back(eligible[i]);
      }
    }
  }
  for (const Row& row : set.rows) {
    auto seg = render_pseudo_demo(row, source_schema, f_k, mode.serialization, target_schema.style);
    set.segments.push_back(std::move(*seg));
  }
  return set;
}

AssembledPrompt build_icl_prompt(std::span<const Row> shots, const Row& x_test,
                                 const DatasetSchema& schema, SerializationMode mode) {
  return build_p2t_prompt(shots, {}, x_test, schema, mode);
}

AssembledPrompt build_p2t_prompt(std::span<const Row> shots,
                                 std::span<const PromptSegment> pseudo_segments,
                                 const Row& x_test, const DatasetSchema& schema,
                                 SerializationMode mode) {
  std::vector<PromptSegment> segments{render_task_description(schema, mode)};
  segments.insert(segments.end(), pseudo_segments.begin(), pseudo_segments.end());
  for (auto& s : labeled_segments(shots, schema, mode)) segments.push_back(std::move(s));
  segments.push_back(render_test_query(x_test, schema, mode));
  return assemble(std::move(segments));
}

double shots_target_mean(std::span<const Row> shots, const DatasetSchema& schema) {
  const std::size_t target = schema.target_index();
  double sum = 0.0;
  std::size_t n = 0;
  for (const Row& r : shots) {
    if (auto v = row_number(r, target)) {
      sum += *v;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Prediction complete_and_parse(AssembledPrompt prompt, std::span<const Row> shots,
                              const DatasetSchema& schema, LlmClient& client) {
  Prediction p{std::move(prompt), {}, Unparseable{}, std::nullopt, false};
  p.completion = client.complete(p.prompt.text(), client.config().decode(default_max_tokens(schema)));
  if (schema.task_kind == TaskKind::kClassification) {
    p.answer = parse_class(p.completion.text, schema.class_tokens());
  } else {
    p.answer = parse_number(p.completion.text);
    if (const auto* num = std::get_if<NumberAnswer>(&p.answer)) {
      p.value = num->value;
    } else {
      p.value = shots_target_mean(shots, schema);
      p.used_fallback = true;
    }
  }
  return p;
}

Prediction predict_icl(std::span<const Row> shots, const Row& x_test, const DatasetSchema& schema,
                       const PipelineMode& mode, LlmClient& client) {
  return complete_and_parse(build_icl_prompt(shots, x_test, schema, mode.serialization), shots,
                            schema, client);
}

PreparedP2T prepare_p2t(std::span<const Row> shots, const DatasetSchema& target_schema,
                        std::span<const Row> source_rows, const DatasetSchema& source_schema,
                        const PipelineMode& mode, LlmClient& client) {
  mode.validate();
  using K = TargetSelection::Kind;
  using O = FeatureSelection::Origin;
  const auto candidates = candidate_features(source_schema);
  if (candidates.empty()) throw NoCandidateFeatures("source schema has no candidate feature");

  PreparedP2T prepared;
  FeatureSelection sel;
  switch (mode.target_selection.kind) {
    case K::kLlmIdentified:
      sel = identify_correlated_feature(shots, source_schema, target_schema, client,
                                        mode.serialization);
      break;
    case K::kFixed:
      sel.column = mode.target_selection.column;
      sel.origin = O::kFixed;
      break;
    case K::kRandom: {
      Rng rng(mode.target_selection.seed);
      sel.column = candidates[rng.below(candidates.size())];
      sel.origin = O::kRandom;
      break;
    }
    case K::kConventional:
      sel.column = conventional_identify(shots, target_schema, candidates);
      sel.origin = O::kConventional;
      break;
    case K::kSourceLabel:
      sel.column = source_schema.target;
      sel.origin = O::kSourceLabel;
      break;
  }
  const bool same_table = mode.source == SourceKind::kUnlabeledSame;
  if (same_table && sel.column == target_schema.target) {
    throw ConfigError("pseudo-demonstration target may not be the task label '" + sel.column + "'");
  }
  if (!source_schema.find(sel.column)) {
    throw ConfigError("pseudo-demonstration target '" + sel.column + "' is not a source column");
  }
  prepared.selection = std::move(sel);

  try {
    prepared.pseudo = build_pseudo_demos(shots, target_schema, source_rows, source_schema,
                                         prepared.selection->column, mode);
  } catch (const EmptyPseudoSet& e) {
    prepared.degraded = true;
    prepared.warning = std::string(e.what()) + "; falling back to the ICL prompt";
  }
  return prepared;
}

Prediction predict_prepared(const PreparedP2T& prepared, std::span<const Row> shots,
                            const Row& x_test, const DatasetSchema& schema,
                            const PipelineMode& mode, LlmClient& client) {
  return complete_and_parse(
      build_p2t_prompt(shots, prepared.pseudo.segments, x_test, schema, mode.serialization), shots,
      schema, client);
}

Prediction predict_p2t(std::span<const Row> shots, const Row& x_test,
                       const DatasetSchema& target_schema, std::span<const Row> source_rows,
                       const DatasetSchema& source_schema, const PipelineMode& mode,
                       LlmClient& client) {
  const auto prepared = prepare_p2t(shots, target_schema, source_rows, source_schema, mode, client);
  return predict_prepared(prepared, shots, x_test, target_schema, mode, client);
}

double predict_regression(std::span<const Row> shots, const Row& x_test,
                          const DatasetSchema& target_schema, std::span<const Row> source_rows,
                          const DatasetSchema& source_schema, const PipelineMode& mode,
                          LlmClient& client) {
  if (target_schema.task_kind != TaskKind::kRegression) {
    throw ConfigError("predict_regression needs a regression schema");
  }
  const Prediction p = mode.prediction == PredictionMethod::kP2T
                           ? predict_p2t(shots, x_test, target_schema, source_rows, source_schema,
                                         mode, client)
                           : predict_icl(shots, x_test, target_schema, mode, client);
  return *p.value;
}

}  // namespace p2t
