#include "p2t/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "p2t/errors.hpp"
#include "p2t/random.hpp"

namespace p2t {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_llm(Method m) { return m == Method::kIcl || m == Method::kP2T; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetBinding binding_from_json(const json& j, const fs::path& base) {
  return {resolve(base, j.at("csv").get<std::string>()),
          resolve(base, j.at("schema").get<std::string>())};
}

json binding_to_json(const DatasetBinding& b) {
  return {{"csv", b.csv.string()}, {"schema", b.schema.string()}};
}

// Runs body(i) for i in [0, n) on up to `workers` threads; rethrows the first
// failure after all workers stop.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body body) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

struct SeedData {
  std::vector<Row> shots;
  std::vector<Row> pool;
  std::vector<Row> test;
};

SeedData seed_data(const ExperimentSpec& spec, const TableDataset& target, std::uint64_t seed) {
  SeedData data;
  if (spec.split) {
    std::map<std::size_t, const Row*> by_id;
    for (const Row& r : target.rows) by_id[r.id] = &r;
    auto pick = [&](std::size_t id) -> const Row& {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw ConfigError("split names unknown row id " + std::to_string(id));
      return *it->second;
    };
    std::set<std::size_t> used;
    for (auto id : spec.split->shots) data.shots.push_back(pick(id)), used.insert(id);
    for (auto id : spec.split->test) data.test.push_back(pick(id)), used.insert(id);
    const std::size_t target_col = target.schema.target_index();
    for (const Row& r : target.rows) {
      if (used.count(r.id)) continue;
      Row stripped = r;
      stripped.cells[target_col] = Missing{};
      data.pool.push_back(std::move(stripped));
    }
  } else {
    auto split = make_transfer_split(target, spec.mode.shots, spec.test_fraction, seed);
    data.shots = std::move(split.labeled_shots);
    data.pool = std::move(split.unlabeled_pool);
    data.test = std::move(split.test_set);
  }
  if (spec.max_queries && data.test.size() > spec.max_queries) data.test.resize(spec.max_queries);
  if (spec.mask_fraction > 0.0) {
    for (auto* part : {&data.shots, &data.pool, &data.test}) {
      for (Row& r : *part) r = mask_features(r, target.schema, spec.mask_fraction, derive_seed(seed, r.id));
    }
  }
  return data;
}

struct Datasets {
  TableDataset target;
  std::optional<TableDataset> source;
};

Datasets load_datasets(const ExperimentSpec& spec) {
  Datasets d{load_csv(spec.target.csv, spec.target.schema), std::nullopt};
  if (spec.source) d.source = load_csv(spec.source->csv, spec.source->schema);
  return d;
}

// Source rows and schema for P2T under the spec's transfer setting.
std::pair<std::span<const Row>, const DatasetSchema*> source_view(const ExperimentSpec& spec,
                                                                  const Datasets& d,
                                                                  const SeedData& data) {
  if (spec.mode.source == SourceKind::kHeterogeneous) {
    return {d.source->rows, &d.source->schema};
  }
  return {data.pool, &d.target.schema};
}

double squared(double x) { return x * x; }

struct QueryOutcome {
  double score = 0.0;  // 1/0 for classification, squared error for regression
  bool unparseable = false;
  std::uint64_t tokens = 0;
};

QueryOutcome score(const Prediction& p, const Row& truth, const DatasetSchema& schema) {
  QueryOutcome q;
  q.unparseable = is_unparseable(p.answer);
  q.tokens = estimate_tokens(p.prompt.text());
  if (schema.task_kind == TaskKind::kClassification) {
    const auto* cls = std::get_if<ClassAnswer>(&p.answer);
    const auto expected = row_class(truth, schema);
    q.score = cls && expected && cls->index == *expected ? 1.0 : 0.0;
  } else {
    const auto expected = row_number(truth, schema.target_index());
    if (!expected) throw ConfigError("test row " + std::to_string(truth.id) + " has no target value");
    q.score = squared(*p.value - *expected);
  }
  return q;
}

void fold(SeedResult& r, const std::vector<QueryOutcome>& outcomes) {
  double total = 0.0;
  for (const auto& q : outcomes) {
    total += q.score;
    r.unparseable += q.unparseable;
    r.prompt_tokens += q.tokens;
  }
  r.queries = outcomes.size();
  r.prompts += outcomes.size();
  r.value = outcomes.empty() ? 0.0 : total / static_cast<double>(outcomes.size());
}

SeedResult run_llm_seed(const ExperimentSpec& spec, Method method, const Datasets& d,
                        std::uint64_t seed, LlmClient& client) {
  const DatasetSchema& schema = d.target.schema;
  const SeedData data = seed_data(spec, d.target, seed);
  SeedResult result;
  result.seed = seed;
  PipelineMode mode = spec.mode;
  mode.seed = seed;

  std::optional<PreparedP2T> prepared;
  if (method == Method::kP2T) {
    mode.prediction = PredictionMethod::kP2T;
    const auto [rows, source_schema] = source_view(spec, d, data);
    prepared = prepare_p2t(data.shots, schema, rows, *source_schema, mode, client);
    if (prepared->selection) {
      result.feature = prepared->selection->column;
      result.feature_origin = std::string(to_string(prepared->selection->origin));
      result.prompts += prepared->selection->prompts.size();
      for (const auto& p : prepared->selection->prompts) result.prompt_tokens += estimate_tokens(p);
    }
    result.pseudo_demos = prepared->pseudo.segments.size();
    if (prepared->degraded) result.warnings.push_back(prepared->warning);
    if (prepared->pseudo.truncated) result.warnings.push_back("neighbour pool smaller than requested");
  }

  std::vector<QueryOutcome> outcomes(data.test.size());
  parallel_for(data.test.size(), spec.parallel, [&](std::size_t i) {
    const Row& x = data.test[i];
    const Prediction p = prepared ? predict_prepared(*prepared, data.shots, x, schema, mode, client)
                                  : predict_icl(data.shots, x, schema, mode, client);
    outcomes[i] = score(p, x, schema);
  });
  fold(result, outcomes);
  return result;
}

SeedResult run_baseline_seed(const ExperimentSpec& spec, Method method, const Datasets& d,
                             std::uint64_t seed) {
  const DatasetSchema& schema = d.target.schema;
  const SeedData data = seed_data(spec, d.target, seed);
  const BaselineKind kind = method == Method::kKnn ? BaselineKind::kKnn : BaselineKind::kLogistic;
  SeedResult result;
  result.seed = seed;
  result.queries = data.test.size();
  if (data.test.empty()) return result;

  std::vector<Row> fit_rows = data.shots;
  fit_rows.insert(fit_rows.end(), data.pool.begin(), data.pool.end());

  if (schema.task_kind == TaskKind::kRegression) {
    const auto encoder = FeatureEncoder::fit(schema, fit_rows);
    std::vector<double> ys;
    for (const Row& r : data.shots) {
      const auto v = row_number(r, schema.target_index());
      if (!v) throw ConfigError("shot row " + std::to_string(r.id) + " has no target value");
      ys.push_back(*v);
    }
    const Matrix train = encoder.encode(data.shots);
    const Matrix queries = encoder.encode(data.test);
    std::vector<double> preds;
    if (kind == BaselineKind::kKnn) {
      preds = knn_regress(train, ys, queries, spec.knn_k ? spec.knn_k : 1);
    } else {
      const auto model = linear_fit(train, ys, spec.logistic);
      for (const auto& q : queries) preds.push_back(model.predict(q));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      total += squared(preds[i] - *row_number(data.test[i], schema.target_index()));
    }
    result.value = total / static_cast<double>(preds.size());
    return result;
  }

  Labels predictions;
  if (spec.mode.source == SourceKind::kHeterogeneous && d.source) {
    const auto sampled =
        sample_source_rows(d.source->rows, spec.mode.heterogeneous_n, derive_seed(seed, 2));
    predictions = heterogeneous_baseline(data.shots, sampled, schema, d.source->schema, data.test,
                                         kind, spec.label_policy, spec.knn_k, spec.logistic)
                      .predictions;
  } else {
    predictions = plain_baseline(data.shots, fit_rows, schema, data.test, kind, spec.knn_k,
                                 spec.logistic);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto expected = row_class(data.test[i], schema);
    correct += expected && *expected == predictions[i];
  }
  result.value = static_cast<double>(correct) / static_cast<double>(predictions.size());
  return result;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kIcl: return "icl";
    case Method::kP2T: return "p2t";
    case Method::kKnn: return "knn";
    case Method::kLogistic: return "lr";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "icl") return Method::kIcl;
  if (text == "p2t") return Method::kP2T;
  if (text == "knn") return Method::kKnn;
  if (text == "lr") return Method::kLogistic;
  throw ConfigError("unknown method '" + std::string(text) + "'");
}

bool ExperimentSpec::uses_llm() const {
  return std::any_of(methods.begin(), methods.end(), is_llm);
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (mask_fraction < 0.0 || mask_fraction > 1.0) throw ConfigError("mask_fraction must lie in [0, 1]");
  if (parallel == 0) throw ConfigError("parallel must be at least 1");
  const bool has_p2t = std::find(methods.begin(), methods.end(), Method::kP2T) != methods.end();
  if (has_p2t) {
    if (mode.source == SourceKind::kNone) throw ConfigError("p2t needs a transfer source");
    PipelineMode m = mode;
    m.prediction = PredictionMethod::kP2T;
    m.validate();
  }
  if (mode.source == SourceKind::kHeterogeneous && !source) {
    throw ConfigError("heterogeneous transfer needs a source dataset");
  }
  const bool has_baseline = std::any_of(methods.begin(), methods.end(),
                                        [](Method m) { return !is_llm(m); });
  const std::size_t shot_count = split ? split->shots.size() : mode.shots;
  if (has_baseline && shot_count == 0) throw ConfigError("knn and lr need labeled shots");
  if (script && backend && backend->kind != BackendKind::kScripted) {
    throw ConfigError("a script is only valid with the scripted backend");
  }
}

ExperimentSpec ExperimentSpec::from_json(const json& j, const fs::path& base_dir) {
  ExperimentSpec spec;
  try {
    spec.target = binding_from_json(j.at("target"), base_dir);
    if (j.contains("source") && !j.at("source").is_null()) {
      spec.source = binding_from_json(j.at("source"), base_dir);
    }
    if (j.contains("methods")) {
      spec.methods.clear();
      for (const auto& m : j.at("methods")) spec.methods.push_back(parse_method(m.get<std::string>()));
    }
    json mode = j.value("mode", json::object());
    const bool has_p2t =
        std::find(spec.methods.begin(), spec.methods.end(), Method::kP2T) != spec.methods.end();
    if (!has_p2t) mode["prediction"] = "icl_baseline";
    spec.mode = PipelineMode::from_json(mode);
    if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    spec.baseline_seeds = j.value("baseline_seeds", std::vector<std::uint64_t>{});
    if (j.contains("backend")) spec.backend = BackendConfig::from_json(j.at("backend"));
    if (j.contains("script")) {
      ScriptSpec s;
      for (const auto& rule : j.at("script").value("rules", json::array())) {
        s.rules.emplace_back(rule.at(0).get<std::string>(), rule.at(1).get<std::string>());
      }
      s.otherwise = j.at("script").value("otherwise", std::string());
      spec.script = std::move(s);
    }
    if (j.contains("output")) spec.output = resolve(base_dir, j.at("output").get<std::string>());
    if (j.contains("cache")) spec.cache = resolve(base_dir, j.at("cache").get<std::string>());
    spec.test_fraction = j.value("test_fraction", spec.test_fraction);
    spec.max_queries = j.value("max_queries", spec.max_queries);
    spec.mask_fraction = j.value("mask_fraction", spec.mask_fraction);
    spec.parallel = j.value("parallel", spec.parallel);
    spec.knn_k = j.value("knn_k", spec.knn_k);
    if (j.contains("logistic")) {
      const auto& l = j.at("logistic");
      spec.logistic.l2 = l.value("l2", spec.logistic.l2);
      spec.logistic.learning_rate = l.value("learning_rate", spec.logistic.learning_rate);
      spec.logistic.epochs = l.value("epochs", spec.logistic.epochs);
    }
    if (j.contains("label_policy")) {
      const auto& p = j.at("label_policy");
      const auto kind = p.value("kind", std::string("exclude"));
      if (kind == "map_labels") {
        spec.label_policy.kind = SourceLabelPolicy::Kind::kMapLabels;
      } else if (kind != "exclude") {
        throw ConfigError("unknown label_policy kind '" + kind + "'");
      }
      spec.label_policy.label_map =
          p.value("label_map", std::map<std::string, std::string>{});
    }
    if (j.contains("split")) {
      FixedSplit s;
      s.shots = j.at("split").value("shots", std::vector<std::size_t>{});
      s.test = j.at("split").at("test").get<std::vector<std::size_t>>();
      spec.split = std::move(s);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

ExperimentSpec ExperimentSpec::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open experiment spec " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentSpec::to_json() const {
  json j;
  j["target"] = binding_to_json(target);
  if (source) j["source"] = binding_to_json(*source);
  j["mode"] = mode.to_json();
  j["seeds"] = seeds;
  if (!baseline_seeds.empty()) j["baseline_seeds"] = baseline_seeds;
  if (backend) j["backend"] = backend->to_json();
  if (script) {
    json rules = json::array();
    for (const auto& [needle, answer] : script->rules) rules.push_back({needle, answer});
    j["script"] = {{"rules", rules}, {"otherwise", script->otherwise}};
  }
  json methods_json = json::array();
  for (Method m : methods) methods_json.push_back(to_string(m));
  j["methods"] = methods_json;
  if (output) j["output"] = output->string();
  if (cache) j["cache"] = cache->string();
  j["test_fraction"] = test_fraction;
  j["max_queries"] = max_queries;
  j["mask_fraction"] = mask_fraction;
  j["parallel"] = parallel;
  j["knn_k"] = knn_k;
  j["logistic"] = {{"l2", logistic.l2},
                   {"learning_rate", logistic.learning_rate},
                   {"epochs", logistic.epochs}};
  j["label_policy"] = {
      {"kind", label_policy.kind == SourceLabelPolicy::Kind::kMapLabels ? "map_labels" : "exclude"},
      {"label_map", label_policy.label_map}};
  if (split) j["split"] = {{"shots", split->shots}, {"test", split->test}};
  return j;
}

void MethodReport::aggregate() {
  mean = stddev = 0.0;
  unparseable = prompts = 0;
  prompt_tokens = 0;
  for (const auto& s : seeds) {
    mean += s.value;
    unparseable += s.unparseable;
    prompts += s.prompts;
    prompt_tokens += s.prompt_tokens;
  }
  if (seeds.empty()) return;
  const double n = static_cast<double>(seeds.size());
  mean /= n;
  if (seeds.size() > 1) {
    double ss = 0.0;
    for (const auto& s : seeds) ss += squared(s.value - mean);
    stddev = std::sqrt(ss / (n - 1.0));
  }
}

const MethodReport* RunReport::find(Method method) const {
  for (const auto& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

json RunReport::to_json() const {
  json methods_json = json::array();
  for (const auto& m : methods) {
    json seeds_json = json::array();
    for (const auto& s : m.seeds) {
      json sj = {{"seed", s.seed},
                 {"value", s.value},
                 {"queries", s.queries},
                 {"unparseable", s.unparseable},
                 {"prompts", s.prompts},
                 {"prompt_tokens", s.prompt_tokens},
                 {"warnings", s.warnings}};
      if (m.method == Method::kP2T) {
        sj["feature"] = s.feature;
        sj["feature_origin"] = s.feature_origin;
        sj["pseudo_demos"] = s.pseudo_demos;
      }
      seeds_json.push_back(std::move(sj));
    }
    methods_json.push_back({{"method", to_string(m.method)},
                            {"mean", m.mean},
                            {"std", m.stddev},
                            {"unparseable", m.unparseable},
                            {"prompts", m.prompts},
                            {"prompt_tokens", m.prompt_tokens},
                            {"seeds", seeds_json}});
  }
  return {{"version", version}, {"dataset", dataset}, {"source", source},
          {"metric", metric},   {"shots", shots},     {"methods", methods_json}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport r;
  try {
    r.version = j.at("version").get<int>();
    if (r.version != kReportVersion) {
      throw ConfigError("unsupported report version " + std::to_string(r.version));
    }
    r.dataset = j.at("dataset").get<std::string>();
    r.source = j.value("source", std::string());
    r.metric = j.at("metric").get<std::string>();
    r.shots = j.at("shots").get<std::size_t>();
    for (const auto& mj : j.at("methods")) {
      MethodReport m;
      m.method = parse_method(mj.at("method").get<std::string>());
      for (const auto& sj : mj.at("seeds")) {
        SeedResult s;
        s.seed = sj.at("seed").get<std::uint64_t>();
        s.value = sj.at("value").get<double>();
        s.queries = sj.at("queries").get<std::size_t>();
        s.unparseable = sj.at("unparseable").get<std::size_t>();
        s.prompts = sj.at("prompts").get<std::size_t>();
        s.prompt_tokens = sj.at("prompt_tokens").get<std::uint64_t>();
        s.warnings = sj.value("warnings", std::vector<std::string>{});
        s.feature = sj.value("feature", std::string());
        s.feature_origin = sj.value("feature_origin", std::string());
        s.pseudo_demos = sj.value("pseudo_demos", std::size_t{0});
        m.seeds.push_back(std::move(s));
      }
      m.aggregate();
      r.methods.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string RunReport::to_table() const {
  const bool accuracy = metric == "accuracy";
  std::vector<std::string> header = {"dataset", "shots"};
  std::vector<std::string> row = {source.empty() ? dataset : dataset + " <- " + source,
                                  std::to_string(shots)};
  for (const auto& m : methods) {
    header.emplace_back(to_string(m.method));
    row.push_back(accuracy ? format_fixed(100.0 * m.mean, 2) + " ± " + format_fixed(100.0 * m.stddev, 2)
                           : format_fixed(m.mean, 4) + " ± " + format_fixed(m.stddev, 4));
  }
  std::vector<std::size_t> width(header.size());
  auto display = [](const std::string& s) {
    // Count code points so the "±" sign does not skew alignment.
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
      return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
    }));
  };
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = std::max(display(header[i]), display(row[i]));
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i ? " | " : "") << cells[i] << std::string(width[i] - display(cells[i]), ' ');
    }
    out << '\n';
  };
  emit(header);
  for (std::size_t i = 0; i < width.size(); ++i) out << (i ? "-+-" : "") << std::string(width[i], '-');
  out << '\n';
  emit(row);
  out << "metric: " << (accuracy ? "accuracy (%)" : "mean squared error") << '\n';
  return out.str();
}

LlmClient make_client(const ExperimentSpec& spec, std::shared_ptr<ExchangeStore> cache,
                      std::shared_ptr<Transport> transport) {
  BackendConfig cfg = spec.backend.value_or(BackendConfig{});
  if (spec.script) {
    LookupScript script;
    for (const auto& [needle, answer] : spec.script->rules) script.when(needle, answer);
    script.otherwise(spec.script->otherwise);
    return LlmClient::scripted(cfg, script, std::move(cache));
  }
  switch (cfg.kind) {
    case BackendKind::kHttpChat:
      return LlmClient::http(cfg, std::move(cache),
                             transport ? std::move(transport) : std::shared_ptr(make_http_transport()));
    case BackendKind::kReplay:
      return LlmClient::replay(cfg, std::move(cache));
    case BackendKind::kScripted:
      break;
  }
  throw ConfigError("the scripted backend needs a script in the experiment spec");
}

RunReport run(const ExperimentSpec& spec, LlmClient* client, RunStats* stats) {
  spec.validate();
  const Datasets d = load_datasets(spec);

  std::optional<LlmClient> owned;
  if (!client && spec.uses_llm()) {
    auto cache = std::make_shared<ExchangeStore>(spec.cache ? *spec.cache : fs::path());
    owned.emplace(make_client(spec, std::move(cache)));
    client = &*owned;
  }

  RunReport report;
  report.dataset = d.target.schema.name.empty() ? d.target.provenance : d.target.schema.name;
  if (spec.mode.source == SourceKind::kHeterogeneous && d.source) {
    report.source = d.source->schema.name.empty() ? d.source->provenance : d.source->schema.name;
  }
  report.metric = d.target.schema.task_kind == TaskKind::kClassification ? "accuracy" : "mse";
  report.shots = spec.split ? spec.split->shots.size() : spec.mode.shots;

  const auto& baseline_seeds = spec.baseline_seeds.empty() ? spec.seeds : spec.baseline_seeds;
  for (Method method : spec.methods) {
    MethodReport m;
    m.method = method;
    if (is_llm(method)) {
      for (auto seed : spec.seeds) m.seeds.push_back(run_llm_seed(spec, method, d, seed, *client));
    } else {
      for (auto seed : baseline_seeds) m.seeds.push_back(run_baseline_seed(spec, method, d, seed));
    }
    m.aggregate();
    report.methods.push_back(std::move(m));
  }
  if (stats && client) {
    stats->network_calls = client->network_calls();
    stats->backend_calls = client->backend_calls();
    stats->tokens_spent = client->tokens_spent();
  }
  return report;
}

std::vector<fs::path> dump_prompts(const ExperimentSpec& spec, const fs::path& dir) {
  spec.validate();
  const Datasets d = load_datasets(spec);
  const DatasetSchema& schema = d.target.schema;
  // Never consulted: every selection below is resolved without the model.
  auto offline = LlmClient::replay(BackendConfig{}, std::make_shared<ExchangeStore>());

  std::vector<fs::path> written;
  auto write = [&](const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    written.push_back(path);
  };

  for (Method method : spec.methods) {
    if (!is_llm(method)) continue;
    for (auto seed : spec.seeds) {
      const SeedData data = seed_data(spec, d.target, seed);
      const fs::path seed_dir = dir / std::string(to_string(method)) / ("seed" + std::to_string(seed));
      PipelineMode mode = spec.mode;
      mode.seed = seed;
      std::optional<PreparedP2T> prepared;
      if (method == Method::kP2T) {
        mode.prediction = PredictionMethod::kP2T;
        const auto [rows, source_schema] = source_view(spec, d, data);
        if (mode.target_selection.kind == TargetSelection::Kind::kLlmIdentified) {
          write(seed_dir / "correlation.txt",
                build_correlation_prompt(data.shots, *source_schema, schema, mode.serialization).text());
          const auto candidates = candidate_features(*source_schema);
          mode.target_selection = {TargetSelection::Kind::kFixed,
                                   conventional_identify(data.shots, schema, candidates), 0};
        }
        prepared = prepare_p2t(data.shots, schema, rows, *source_schema, mode, offline);
      }
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        const Row& x = data.test[i];
        const auto prompt =
            prepared ? build_p2t_prompt(data.shots, prepared->pseudo.segments, x, schema, mode.serialization)
                     : build_icl_prompt(data.shots, x, schema, mode.serialization);
        write(seed_dir / ("query" + std::to_string(i) + ".txt"), prompt.text());
      }
    }
  }
  return written;
}

std::string CacheStats::to_text() const {
  std::ostringstream out;
  out << "entries: " << entries << '\n'
      << "estimated prompt tokens: " << prompt_tokens << '\n'
      << "estimated response tokens: " << response_tokens << '\n';
  for (const auto& [model, count] : per_model) out << "model " << model << ": " << count << '\n';
  return out.str();
}

CacheStats cache_stats(const fs::path& cache) {
  CacheStats stats;
  if (!fs::exists(cache)) return stats;
  for (const auto& ex : ExchangeStore(cache).all()) {
    ++stats.entries;
    stats.prompt_tokens += estimate_tokens(ex.prompt);
    stats.response_tokens += estimate_tokens(ex.response);
    ++stats.per_model[ex.model];
  }
  return stats;
}

std::size_t cache_prune(const fs::path& cache, const std::string& model, bool keep_only) {
  if (!fs::exists(cache)) return 0;
  const auto all = ExchangeStore(cache).all();
  std::vector<ChatExchange> kept;
  for (const auto& ex : all) {
    if ((ex.model == model) == keep_only) kept.push_back(ex);
  }
  ExchangeStore::write_file(cache, kept);
  return all.size() - kept.size();
}

std::size_t cache_export(const fs::path& cache, const fs::path& out) {
  const auto all = fs::exists(cache) ? ExchangeStore(cache).all() : std::vector<ChatExchange>{};
  ExchangeStore::write_file(out, all);
  return all.size();
}

std::size_t cache_import(const fs::path& cache, const fs::path& in) {
  ExchangeStore store(cache);
  const std::size_t before = store.size();
  for (const auto& ex : ExchangeStore::read_file(in)) store.put(ex);
  return store.size() - before;
}

}  // namespace p2t
