#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "p2t/dataset.hpp"

namespace p2t {

// Descriptive mode uses column descriptions; generic mode replaces them with
// "feature 1".."feature d" and "output y" and drops every gloss.
enum class SerializationMode { kDescriptive, kGeneric };

enum class SegmentKind { kTask, kPseudoDemo, kLabeledDemo, kTestQuery, kCorrelationInstruction };

std::string_view to_string(SegmentKind kind);

class PromptSegment {
 public:
  // Throws CompositionError on empty text.
  PromptSegment(SegmentKind kind, std::string text);

  SegmentKind kind() const { return kind_; }
  const std::string& text() const { return text_; }

  bool operator==(const PromptSegment&) const = default;

 private:
  SegmentKind kind_;
  std::string text_;
};

// Sanctioned segment orders:
//   icl                  task, labeled*, test
//   p2t_few_shot         task, pseudo+, labeled+, test
//   p2t_zero_shot        task, pseudo+, test
//   correlation          cor, labeled+, cor
//   correlation_zero     cor, task, cor
enum class Composition { kIcl, kP2TFewShot, kP2TZeroShot, kCorrelation, kCorrelationZeroShot };

std::string_view to_string(Composition composition);

std::optional<Composition> classify_composition(std::span<const SegmentKind> kinds);

class AssembledPrompt {
 public:
  const std::vector<PromptSegment>& segments() const { return segments_; }
  const std::string& text() const { return text_; }
  Composition composition() const { return composition_; }

 private:
  friend AssembledPrompt assemble(std::vector<PromptSegment> segments);
  std::vector<PromptSegment> segments_;
  std::string text_;
  Composition composition_ = Composition::kIcl;
};

// Joins segments with a blank line. Throws CompositionError when the order is
// not one of the sanctioned compositions.
AssembledPrompt assemble(std::vector<PromptSegment> segments);

// Inverse of the blank-line join.
std::vector<std::string> split_segment_texts(std::string_view text);

// Value rendering: integral literals print bare ("53"), other numbers print
// the shortest round-tripping decimal with at least one fractional digit
// ("583.0", "222.22476310000002"). Category codes print verbatim.
std::string render_number(double value, bool integral);
std::string render_value(const Cell& cell);

// "a, b, and c" (oxford) or "a, b, c".
std::string join_enumeration(std::span<const std::string> items, bool oxford_and);

// "Question: If the <desc> is <v>, ..., then what is the <ask>" without the
// closing punctuation. The target and the asked column are never clauses;
// missing cells are skipped. Throws EmptyRow when no clause remains.
std::string question_body(const Row& row, const DatasetSchema& schema, std::string_view ask_column,
                          SerializationMode mode, const PromptStyle& style);

// question_body plus "?".
std::string serialize_question(const Row& row, const DatasetSchema& schema,
                               std::string_view ask_column, SerializationMode mode);

// Display name of a column under the given mode.
std::string column_label(const DatasetSchema& schema, std::size_t column, SerializationMode mode);

PromptSegment render_task_description(const DatasetSchema& schema, SerializationMode mode);

// Demonstration with its answer, or the test query when `answer` is empty.
std::string render_target_question(const Row& row, const DatasetSchema& schema,
                                   SerializationMode mode, std::string_view answer);

// Throws Error if the row has no usable target value.
PromptSegment render_labeled_demo(const Row& row, const DatasetSchema& schema,
                                  SerializationMode mode);
PromptSegment render_test_query(const Row& row, const DatasetSchema& schema,
                                SerializationMode mode);

// Pseudo-demonstration predicting column `f_k` of `schema` from the remaining
// features. `style` is the style of the prompt being assembled (the target's).
// Returns nullopt when the row's f_k cell is missing.
std::optional<PromptSegment> render_pseudo_demo(const Row& row, const DatasetSchema& schema,
                                                std::string_view f_k, SerializationMode mode,
                                                const PromptStyle& style);

inline constexpr std::string_view kCorrelationRetryHint =
    "You must answer with exactly one feature name from the list.";

// The correlation-identification instruction wraps the labeled demos: an
// opening (task + candidate list) and a closing question ending in "Answer:".
struct CorrelationInstruction {
  PromptSegment opening;
  PromptSegment closing;
};

CorrelationInstruction render_correlation_instruction(
    std::span<const std::string> candidate_labels, const DatasetSchema& target_schema,
    SerializationMode mode, bool retry_hint = false);

// Comparison used for golden prompt files: CRLF -> LF, runs of newlines
// collapse to one, trailing whitespace dropped, and "Answer:" followed by a
// value always carries exactly one space.
std::string normalize_for_golden(std::string_view text);

}  // namespace p2t
