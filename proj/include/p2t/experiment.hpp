#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p2t/baselines.hpp"
#include "p2t/dataset.hpp"
#include "p2t/llm_backend.hpp"
#include "p2t/pipeline.hpp"
#include "p2t/sampling.hpp"

namespace p2t {

inline constexpr int kReportVersion = 1;

enum class Method { kIcl, kP2T, kKnn, kLogistic };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

struct DatasetBinding {
  std::filesystem::path csv;
  std::filesystem::path schema;
};

// Pins the split instead of drawing it: shots and test queries by row id, in
// the order given. Every other row goes to the unlabeled pool.
struct FixedSplit {
  std::vector<std::size_t> shots;
  std::vector<std::size_t> test;
};

// Scripted backend rules for offline runs: first matching needle answers.
struct ScriptSpec {
  std::vector<std::pair<std::string, std::string>> rules;
  std::string otherwise;
};

struct ExperimentSpec {
  DatasetBinding target;
  std::optional<DatasetBinding> source;  // required for heterogeneous transfer
  PipelineMode mode;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<std::uint64_t> baseline_seeds;  // empty: same as `seeds`
  std::optional<BackendConfig> backend;
  std::optional<ScriptSpec> script;
  std::vector<Method> methods = {Method::kIcl, Method::kP2T};
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> cache;  // JSON-lines exchange file
  double test_fraction = kDefaultTestFraction;
  std::size_t max_queries = 0;  // 0: the whole test set
  double mask_fraction = 0.0;
  std::size_t parallel = 1;
  std::size_t knn_k = 0;  // 0: shots per class
  LogisticParams logistic;
  SourceLabelPolicy label_policy;
  std::optional<FixedSplit> split;

  bool uses_llm() const;
  // Throws ConfigError.
  void validate() const;

  // Relative paths resolve against `base_dir`.
  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentSpec load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double value = 0.0;  // accuracy or mean squared error
  std::size_t queries = 0;
  std::size_t unparseable = 0;
  std::size_t prompts = 0;
  std::uint64_t prompt_tokens = 0;  // estimated
  std::string feature;              // P2T: chosen pseudo-demo target
  std::string feature_origin;
  std::size_t pseudo_demos = 0;
  std::vector<std::string> warnings;
};

struct MethodReport {
  Method method = Method::kIcl;
  std::vector<SeedResult> seeds;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single seed
  std::size_t unparseable = 0;
  std::size_t prompts = 0;
  std::uint64_t prompt_tokens = 0;

  // Recomputes the aggregates from `seeds`.
  void aggregate();
};

struct RunReport {
  int version = kReportVersion;
  std::string dataset;
  std::string source;
  std::string metric;  // "accuracy" or "mse"
  std::size_t shots = 0;
  std::vector<MethodReport> methods;

  const MethodReport* find(Method method) const;
  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
  // Rows are datasets, columns methods, cells "mean ± std" (accuracy in %).
  std::string to_table() const;
};

// Backend usage of a run, kept out of RunReport so warm and cold runs produce
// identical reports.
struct RunStats {
  std::size_t network_calls = 0;
  std::size_t backend_calls = 0;
  std::uint64_t tokens_spent = 0;
};

// Builds the client the spec describes: scripted when the spec has a script,
// replay or http_chat otherwise, all sharing `cache`.
LlmClient make_client(const ExperimentSpec& spec, std::shared_ptr<ExchangeStore> cache,
                      std::shared_ptr<Transport> transport = nullptr);

// Runs every method over its seeds. LLM methods use `client` when given,
// otherwise a client built by make_client.
RunReport run(const ExperimentSpec& spec, LlmClient* client = nullptr, RunStats* stats = nullptr);

// Writes <dir>/<method>/seed<K>/query<I>.txt for the LLM methods, plus
// <dir>/p2t/seed<K>/correlation.txt when the model picks f_k. The backend is
// never contacted, so where the model would pick f_k the conventional
// surrogate picks it instead. Returns the written paths.
std::vector<std::filesystem::path> dump_prompts(const ExperimentSpec& spec,
                                                const std::filesystem::path& dir);

struct CacheStats {
  std::size_t entries = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t response_tokens = 0;
  std::map<std::string, std::size_t> per_model;

  std::string to_text() const;
};

CacheStats cache_stats(const std::filesystem::path& cache);
// Removes entries whose model is `model` (or every other entry when
// `keep_only`). Returns the number removed.
std::size_t cache_prune(const std::filesystem::path& cache, const std::string& model,
                        bool keep_only = false);
// Writes the entries as a replay file. Returns the entry count.
std::size_t cache_export(const std::filesystem::path& cache, const std::filesystem::path& out);
// Merges a replay file into the cache; existing keys win. Returns entries added.
std::size_t cache_import(const std::filesystem::path& cache, const std::filesystem::path& in);

}  // namespace p2t
