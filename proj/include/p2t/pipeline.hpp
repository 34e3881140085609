#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "p2t/answer_parser.hpp"
#include "p2t/dataset.hpp"
#include "p2t/llm_backend.hpp"
#include "p2t/serializer.hpp"

namespace p2t {

enum class PredictionMethod { kIclBaseline, kP2T };
enum class SourceKind { kNone, kUnlabeledSame, kHeterogeneous };

struct TargetSelection {
  enum class Kind {
    kLlmIdentified,  // ask the model (default)
    kFixed,          // use `column`
    kRandom,         // uniform over candidates, seeded by `seed`
    kConventional,   // correlation surrogate over labeled rows
    kSourceLabel,    // heterogeneous sources only: the source's own label column
  };
  Kind kind = Kind::kLlmIdentified;
  std::string column;
  std::uint64_t seed = 0;
};

struct PipelineMode {
  PredictionMethod prediction = PredictionMethod::kP2T;
  std::size_t shots = 1;  // per class (flat count for regression)
  SourceKind source = SourceKind::kUnlabeledSame;
  TargetSelection target_selection;
  SerializationMode serialization = SerializationMode::kDescriptive;
  std::size_t neighbors_per_shot = 30;
  std::size_t zero_shot_source_n = 30;
  std::size_t heterogeneous_n = 10;
  std::uint64_t seed = 0;  // pseudo-row sampling

  // Throws ConfigError.
  void validate() const;

  static PipelineMode from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct FeatureScore {
  std::string name;
  std::optional<double> score;  // |correlation| in [0, 1]; nullopt when undefined
  double stump_accuracy = 0.0;
};

// Ranks `candidates` (column names of `schema`, in the order given) by how
// strongly they associate with the schema's target over `labeled` rows:
// correlation ratio for numeric features against a class label (equal to the
// absolute point-biserial correlation for two classes), Cramer's V for
// categorical ones, |Pearson r| for regression targets. Ties fall to a
// single-split decision stump's training accuracy, then to candidate order.
// Candidates absent from `schema` score as undefined.
std::vector<FeatureScore> rank_features(std::span<const Row> labeled, const DatasetSchema& schema,
                                        std::span<const std::string> candidates);

// Best candidate of rank_features; the first candidate when every score is
// undefined. Throws NoCandidateFeatures on an empty candidate list.
std::string conventional_identify(std::span<const Row> labeled, const DatasetSchema& schema,
                                  std::span<const std::string> candidates);

// Columns of the source eligible as pseudo-demo targets.
std::vector<std::string> candidate_features(const DatasetSchema& source_schema);

struct FeatureSelection {
  enum class Origin { kLlm, kLlmRetry, kFallback, kFixed, kRandom, kConventional, kSourceLabel };
  std::string column;
  Origin origin = Origin::kLlm;
  std::vector<std::string> prompts;    // correlation prompts sent, in order
  std::vector<std::string> responses;  // raw replies
};

std::string_view to_string(FeatureSelection::Origin origin);

// The correlation-identification prompt. With shots it wraps the labeled
// demos; without it wraps the task description.
AssembledPrompt build_correlation_prompt(std::span<const Row> shots,
                                         const DatasetSchema& source_schema,
                                         const DatasetSchema& target_schema,
                                         SerializationMode mode, bool retry_hint = false);

// Asks the model for f_k, retries once with an explicit hint, then falls back
// to conventional_identify over `fallback_rows` (rows of `target_schema`).
FeatureSelection identify_correlated_feature(std::span<const Row> shots,
                                             const DatasetSchema& source_schema,
                                             const DatasetSchema& target_schema,
                                             LlmClient& client, SerializationMode mode,
                                             std::span<const Row> fallback_rows = {});

struct PseudoDemoSet {
  std::vector<Row> rows;
  std::vector<PromptSegment> segments;
  bool truncated = false;  // some neighbour query asked for more rows than eligible
};

// Few-shot with an unlabeled pool of the target dataset: neighbours of each
// shot, deduplicated across shots (first occurrence wins). Zero-shot: a
// seeded sample of `zero_shot_source_n` rows. Heterogeneous few-shot: a seeded
// sample of `heterogeneous_n` rows. Rows lacking f_k are never used. Throws
// EmptyPseudoSet when no row is eligible.
PseudoDemoSet build_pseudo_demos(std::span<const Row> shots, const DatasetSchema& target_schema,
                                 std::span<const Row> source_rows,
                                 const DatasetSchema& source_schema, std::string_view f_k,
                                 const PipelineMode& mode);

AssembledPrompt build_icl_prompt(std::span<const Row> shots, const Row& x_test,
                                 const DatasetSchema& schema, SerializationMode mode);

AssembledPrompt build_p2t_prompt(std::span<const Row> shots,
                                 std::span<const PromptSegment> pseudo_segments,
                                 const Row& x_test, const DatasetSchema& schema,
                                 SerializationMode mode);

struct Prediction {
  AssembledPrompt prompt;
  Completion completion;
  ParsedAnswer answer;
  std::optional<double> value;  // regression: parsed number or the fallback
  bool used_fallback = false;   // regression reply was unparseable
};

// Completes an assembled target prompt and parses it according to the task.
Prediction complete_and_parse(AssembledPrompt prompt, std::span<const Row> shots,
                              const DatasetSchema& schema, LlmClient& client);

Prediction predict_icl(std::span<const Row> shots, const Row& x_test, const DatasetSchema& schema,
                       const PipelineMode& mode, LlmClient& client);

// Everything P2T decides once per run: f_k and the pseudo-demonstrations.
struct PreparedP2T {
  std::optional<FeatureSelection> selection;
  PseudoDemoSet pseudo;
  bool degraded = false;  // no eligible pseudo rows, predictions fall back to ICL
  std::string warning;
};

PreparedP2T prepare_p2t(std::span<const Row> shots, const DatasetSchema& target_schema,
                        std::span<const Row> source_rows, const DatasetSchema& source_schema,
                        const PipelineMode& mode, LlmClient& client);

Prediction predict_prepared(const PreparedP2T& prepared, std::span<const Row> shots,
                            const Row& x_test, const DatasetSchema& schema,
                            const PipelineMode& mode, LlmClient& client);

// prepare_p2t followed by predict_prepared, for single queries.
Prediction predict_p2t(std::span<const Row> shots, const Row& x_test,
                       const DatasetSchema& target_schema, std::span<const Row> source_rows,
                       const DatasetSchema& source_schema, const PipelineMode& mode,
                       LlmClient& client);

// Numeric prediction for regression schemas through either method; an
// unparseable reply scores as the mean of the labeled shots' targets.
double predict_regression(std::span<const Row> shots, const Row& x_test,
                          const DatasetSchema& target_schema, std::span<const Row> source_rows,
                          const DatasetSchema& source_schema, const PipelineMode& mode,
                          LlmClient& client);

double shots_target_mean(std::span<const Row> shots, const DatasetSchema& schema);

}  // namespace p2t
