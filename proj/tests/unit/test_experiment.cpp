#include <doctest.h>

#include <cmath>

#include "p2t/errors.hpp"
#include "p2t/experiment.hpp"
#include "support.hpp"

using namespace p2t;
using namespace p2t::testing;

namespace {

constexpr const char* kSchema = R"({
  "name": "threshold",
  "columns": [
    {"name": "x0", "kind": "numeric", "description": "measurement 0"},
    {"name": "x1", "kind": "numeric", "description": "measurement 1"},
    {"name": "y", "kind": "categorical", "codes": ["0", "1"], "description": "group"}
  ],
  "target": "y",
  "class_labels": [["class1", "low"], ["class2", "high"]]
})";

// y = 1 exactly when x0 >= 50; x1 is noise.
void write_threshold_dataset(const TempDir& dir, std::size_t n = 60) {
  write_file(dir / "schema.json", kSchema);
  std::string csv = "x0,x1,y\n";
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t x0 = rng.below(100);
    csv += std::to_string(x0) + "," + std::to_string(rng.below(100)) + "," + (x0 >= 50 ? "1" : "0") +
           "\n";
  }
  write_file(dir / "data.csv", csv);
}

ExperimentSpec threshold_spec(const TempDir& dir) {
  ExperimentSpec spec;
  spec.target = {dir / "data.csv", dir / "schema.json"};
  spec.mode.neighbors_per_shot = 3;
  spec.seeds = {0, 1, 2, 3, 4};
  spec.script = ScriptSpec{{}, "class1"};
  return spec;
}

// Reads x0 off the test query and answers with the true class.
std::string oracle(std::string_view prompt) {
  if (prompt.find("Choose the most important feature") != std::string_view::npos) {
    return "measurement 0";
  }
  const auto query = prompt.substr(prompt.rfind("\n\n") + 2);
  const auto at = query.find("measurement 0 is ");
  if (at == std::string_view::npos) return "class1";
  const double x0 = std::stod(std::string(query.substr(at + 17)));
  return x0 >= 50 ? "Answer: class2" : "Answer: class1";
}

}  // namespace

TEST_CASE("a ground-truth oracle scores accuracy 1 with zero spread") {
  TempDir dir;
  write_threshold_dataset(dir);
  const auto spec = threshold_spec(dir);
  auto client = LlmClient::scripted({}, oracle);
  RunStats stats;
  const auto report = run(spec, &client, &stats);
  CHECK(report.metric == "accuracy");
  for (Method m : {Method::kIcl, Method::kP2T}) {
    const auto* r = report.find(m);
    REQUIRE(r);
    CHECK(r->mean == 1.0);
    CHECK(r->stddev == 0.0);
    CHECK(r->seeds.size() == 5);
  }
  CHECK(report.find(Method::kP2T)->seeds[0].feature == "x0");
  CHECK(report.find(Method::kP2T)->seeds[0].feature_origin == "llm");
  CHECK(stats.network_calls == 0);
}

TEST_CASE("a constant answer scores the test-set class frequency") {
  TempDir dir;
  write_threshold_dataset(dir);
  const auto spec = threshold_spec(dir);
  const auto ds = load_csv(spec.target.csv, spec.target.schema);
  const auto report = run(spec);
  const auto* icl = report.find(Method::kIcl);
  REQUIRE(icl);
  for (const auto& seed : icl->seeds) {
    const auto split = make_transfer_split(ds, 1, spec.test_fraction, seed.seed);
    double class1 = 0;
    for (const Row& r : split.test_set) class1 += row_class(r, ds.schema) == 0u;
    CHECK(seed.value == doctest::Approx(class1 / double(split.test_set.size())));
    CHECK(seed.queries == split.test_set.size());
  }
}

TEST_CASE("baseline-only runs need no backend") {
  TempDir dir;
  write_threshold_dataset(dir, 200);
  auto spec = threshold_spec(dir);
  spec.script.reset();
  spec.methods = {Method::kKnn, Method::kLogistic};
  spec.mode.shots = 10;
  spec.logistic = {1e-4, 1.0, 2000};
  const auto report = run(spec);
  CHECK(report.find(Method::kKnn)->mean > 0.8);
  CHECK(report.find(Method::kLogistic)->mean > 0.8);
  CHECK_FALSE(report.find(Method::kIcl));
}

TEST_CASE("a warm cache replays the run without network calls") {
  TempDir dir;
  write_threshold_dataset(dir);
  auto spec = threshold_spec(dir);
  spec.seeds = {0, 1};
  spec.script.reset();
  spec.cache = dir / "cache.jsonl";

  auto recorder = LlmClient::scripted({}, oracle, std::make_shared<ExchangeStore>(*spec.cache));
  const auto cold = run(spec, &recorder);

  spec.backend = BackendConfig{};
  spec.backend->kind = BackendKind::kReplay;
  RunStats stats;
  const auto warm = run(spec, nullptr, &stats);
  CHECK(stats.network_calls == 0);
  CHECK(stats.backend_calls == 0);
  CHECK(warm.to_json().dump() == cold.to_json().dump());
}

TEST_CASE("report JSON round-trips and re-aggregates") {
  TempDir dir;
  write_threshold_dataset(dir);
  const auto report = run(threshold_spec(dir));
  const auto again = RunReport::from_json(report.to_json());
  CHECK(again.to_json() == report.to_json());

  MethodReport m;
  for (double v : {0.5, 0.7, 0.9}) m.seeds.push_back(SeedResult{.value = v});
  m.aggregate();
  CHECK(m.mean == doctest::Approx(0.7));
  CHECK(m.stddev == doctest::Approx(0.2));

  auto j = report.to_json();
  j["version"] = 99;
  CHECK_THROWS_AS(RunReport::from_json(j), ConfigError);

  const auto table = report.to_table();
  CHECK(table.find("threshold") != std::string::npos);
  CHECK(table.find("±") != std::string::npos);
}

TEST_CASE("dump_prompts writes every query without a backend") {
  TempDir dir;
  write_threshold_dataset(dir);
  auto spec = threshold_spec(dir);
  spec.seeds = {3};
  spec.script.reset();
  const auto written = dump_prompts(spec, dir / "dump");
  const auto ds = load_csv(spec.target.csv, spec.target.schema);
  const auto tests = make_transfer_split(ds, 1, spec.test_fraction, 3).test_set.size();
  CHECK(written.size() == 2 * tests + 1);
  CHECK(std::filesystem::exists(dir / "dump" / "p2t" / "seed3" / "correlation.txt"));
  const auto p2t = read_file(dir / "dump" / "p2t" / "seed3" / "query0.txt");
  CHECK(p2t.find("then what is the measurement 0. Answer:") != std::string::npos);
  CHECK(read_file(dir / "dump" / "icl" / "seed3" / "query0.txt").ends_with("Answer:"));
}

TEST_CASE("masking keeps runs deterministic") {
  TempDir dir;
  write_threshold_dataset(dir);
  auto spec = threshold_spec(dir);
  spec.mask_fraction = 0.5;
  spec.methods = {Method::kIcl};
  const auto a = run(spec);
  const auto b = run(spec);
  CHECK(a.to_json() == b.to_json());
}

TEST_CASE("spec validation") {
  TempDir dir;
  write_threshold_dataset(dir);
  const nlohmann::json base = {{"target", {{"csv", "data.csv"}, {"schema", "schema.json"}}},
                               {"script", {{"otherwise", "class1"}}}};
  const auto spec = ExperimentSpec::from_json(base, dir.path());
  CHECK(spec.target.csv == dir / "data.csv");
  CHECK(ExperimentSpec::from_json(spec.to_json()).to_json() == spec.to_json());

  auto expect_error = [&](nlohmann::json patch) {
    auto j = base;
    j.merge_patch(patch);
    CHECK_THROWS_AS(ExperimentSpec::from_json(j, dir.path()), ConfigError);
  };
  expect_error({{"seeds", nlohmann::json::array()}});
  expect_error({{"methods", nlohmann::json::array()}});
  expect_error({{"methods", {"gpt"}}});
  expect_error({{"test_fraction", 1.0}});
  expect_error({{"mask_fraction", -0.1}});
  expect_error({{"parallel", 0}});
  expect_error({{"mode", {{"source", "heterogeneous"}}}});
  expect_error({{"mode", {{"source", "none"}}}});
  expect_error({{"methods", {"knn"}}, {"mode", {{"shots", 0}}}});
  expect_error({{"backend", {{"kind", "replay"}}}});
  expect_error({{"label_policy", {{"kind", "guess"}}}});
  expect_error({{"target", nullptr}});

  CHECK_NOTHROW(ExperimentSpec::from_json(
      nlohmann::json{{"target", base["target"]}, {"methods", {"icl"}}, {"mode", {{"source", "none"}}}},
      dir.path()));
}

TEST_CASE("scripted backend without a script is a configuration error") {
  TempDir dir;
  write_threshold_dataset(dir);
  auto spec = threshold_spec(dir);
  spec.script.reset();
  spec.backend = BackendConfig{};
  spec.backend->kind = BackendKind::kScripted;
  CHECK_THROWS_AS(run(spec), ConfigError);
}

TEST_CASE("a fixed split pins shots and queries") {
  TempDir dir;
  write_threshold_dataset(dir);
  auto spec = threshold_spec(dir);
  spec.split = FixedSplit{{0, 1}, {2, 3, 4}};
  spec.seeds = {0};
  const auto report = run(spec);
  CHECK(report.find(Method::kIcl)->seeds[0].queries == 3);
  CHECK(report.shots == 2);
  spec.split = FixedSplit{{0}, {999}};
  CHECK_THROWS_AS(run(spec), ConfigError);
}

TEST_CASE("cache tools") {
  TempDir dir;
  const auto cache = dir / "cache.jsonl";
  CHECK(cache_stats(cache).entries == 0);

  auto store = std::make_shared<ExchangeStore>(cache);
  BackendConfig a;
  a.model_name = "model-a";
  BackendConfig b;
  b.model_name = "model-b";
  auto ca = LlmClient::scripted(a, [](std::string_view) { return std::string("class1"); }, store);
  auto cb = LlmClient::scripted(b, [](std::string_view) { return std::string("class2"); }, store);
  ca.complete("first prompt", {0.0, 16});
  ca.complete("second prompt", {0.0, 16});
  cb.complete("first prompt", {0.0, 16});

  const auto stats = cache_stats(cache);
  CHECK(stats.entries == 3);
  CHECK(stats.per_model.at("model-a") == 2);
  CHECK(stats.prompt_tokens == 6);
  CHECK(stats.to_text().starts_with("entries: 3\n"));

  CHECK(cache_export(cache, dir / "replay.jsonl") == 3);
  CHECK(cache_prune(cache, "model-a", true) == 1);
  CHECK(cache_stats(cache).entries == 2);
  CHECK(cache_prune(cache, "model-a") == 2);
  CHECK(cache_stats(cache).entries == 0);
  CHECK(cache_import(cache, dir / "replay.jsonl") == 3);
  CHECK(cache_import(cache, dir / "replay.jsonl") == 0);
  CHECK(cache_stats(cache).per_model.at("model-b") == 1);
}
