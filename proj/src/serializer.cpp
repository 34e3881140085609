#include "p2t/serializer.hpp"

#include <array>
#include <charconv>
#include <cctype>
#include <cmath>

#include "p2t/errors.hpp"

namespace p2t {
namespace {

constexpr std::string_view kReadInstruction =
    "Read a given information and questions. Think step by step, and then ";

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// "class1 or class2", "class1, class2, or class3".
std::string or_list(std::span<const std::string> items) {
  if (items.size() <= 2) {
    return items.size() == 2 ? items[0] + " or " + items[1] : (items.empty() ? "" : items[0]);
  }
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
  return out + "or " + items.back();
}

std::string bracket_list(std::span<const std::string> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

// "Class1 indicates A, and class2 indicates B." or "" when nothing is glossed.
std::string class_gloss_sentence(const DatasetSchema& schema, SerializationMode mode) {
  if (mode == SerializationMode::kGeneric) return {};
  std::vector<std::string> parts;
  for (const auto& label : schema.class_labels) {
    if (!label.gloss.empty()) parts.push_back(label.token + " indicates " + label.gloss);
  }
  if (parts.empty()) return {};
  return capitalize(join_enumeration(parts, true)) + ".";
}

std::string value_gloss_clause(const ColumnSpec& col) {
  std::vector<std::string> parts;
  for (const auto& code : col.codes) {
    if (auto it = col.value_glosses.find(code); it != col.value_glosses.end()) {
      parts.push_back(code + " indicates " + it->second);
    }
  }
  if (parts.empty()) return {};
  return " (" + join_enumeration(parts, true) + ")";
}

std::vector<std::string> feature_labels(const DatasetSchema& schema, SerializationMode mode) {
  std::vector<std::string> out;
  for (std::size_t c : schema.feature_indices()) out.push_back(column_label(schema, c, mode));
  return out;
}

std::string dataset_sentence(const DatasetSchema& schema, SerializationMode mode) {
  const auto labels = feature_labels(schema, mode);
  return "The dataset consists of " + std::to_string(labels.size()) +
         " input variables: " + join_enumeration(labels, schema.style.oxford_and) + ".";
}

std::string target_label(const DatasetSchema& schema, SerializationMode mode) {
  return column_label(schema, schema.target_index(), mode);
}

std::string class_choice_suffix(const DatasetSchema& schema, SerializationMode mode) {
  const std::string choices = bracket_list(schema.class_tokens());
  const std::string glosses = class_gloss_sentence(schema, mode);
  if (schema.style.choice_layout == PromptStyle::ChoiceLayout::kChooseBetween) {
    return "? Choose between " + choices + "." + (glosses.empty() ? "" : " " + glosses);
  }
  return "?" + (glosses.empty() ? "" : " " + glosses) + " Choices: " + choices + ".?";
}

std::string with_answer(std::string question, std::string_view answer) {
  question += " Answer:";
  if (!answer.empty()) {
    question += ' ';
    question += answer;
  }
  return question;
}

}  // namespace

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::kTask: return "task";
    case SegmentKind::kPseudoDemo: return "pseudo_demo";
    case SegmentKind::kLabeledDemo: return "labeled_demo";
    case SegmentKind::kTestQuery: return "test_query";
    case SegmentKind::kCorrelationInstruction: return "correlation_instruction";
  }
  return "unknown";
}

std::string_view to_string(Composition composition) {
  switch (composition) {
    case Composition::kIcl: return "icl";
    case Composition::kP2TFewShot: return "p2t_few_shot";
    case Composition::kP2TZeroShot: return "p2t_zero_shot";
    case Composition::kCorrelation: return "correlation";
    case Composition::kCorrelationZeroShot: return "correlation_zero_shot";
  }
  return "unknown";
}

PromptSegment::PromptSegment(SegmentKind kind, std::string text)
    : kind_(kind), text_(std::move(text)) {
  if (text_.empty()) throw CompositionError("empty " + std::string(to_string(kind)) + " segment");
  if (text_.find("\n\n") != std::string::npos) {
    throw CompositionError("segment text may not contain a blank line");
  }
}

std::optional<Composition> classify_composition(std::span<const SegmentKind> kinds) {
  using K = SegmentKind;
  const std::size_t n = kinds.size();
  auto run_end = [&](std::size_t from, K kind) {
    while (from < n && kinds[from] == kind) ++from;
    return from;
  };
  if (n >= 2 && kinds[0] == K::kTask && kinds[n - 1] == K::kTestQuery) {
    const std::size_t pseudo_end = run_end(1, K::kPseudoDemo);
    const std::size_t labeled_end = run_end(pseudo_end, K::kLabeledDemo);
    if (labeled_end != n - 1) return std::nullopt;
    const bool has_pseudo = pseudo_end > 1;
    const bool has_labeled = labeled_end > pseudo_end;
    if (!has_pseudo) return Composition::kIcl;
    return has_labeled ? Composition::kP2TFewShot : Composition::kP2TZeroShot;
  }
  if (n >= 3 && kinds[0] == K::kCorrelationInstruction && kinds[n - 1] == K::kCorrelationInstruction) {
    if (n == 3 && kinds[1] == K::kTask) return Composition::kCorrelationZeroShot;
    if (run_end(1, K::kLabeledDemo) == n - 1) return Composition::kCorrelation;
  }
  return std::nullopt;
}

AssembledPrompt assemble(std::vector<PromptSegment> segments) {
  std::vector<SegmentKind> kinds;
  kinds.reserve(segments.size());
  for (const auto& s : segments) kinds.push_back(s.kind());
  const auto composition = classify_composition(kinds);
  if (!composition) {
    std::string order;
    for (auto k : kinds) order += (order.empty() ? "" : ", ") + std::string(to_string(k));
    throw CompositionError("unsanctioned segment order [" + order + "]");
  }
  AssembledPrompt prompt;
  prompt.composition_ = *composition;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) prompt.text_ += "\n\n";
    prompt.text_ += segments[i].text();
  }
  prompt.segments_ = std::move(segments);
  return prompt;
}

std::vector<std::string> split_segment_texts(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find("\n\n", start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      return out;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 2;
  }
}

std::string render_number(double value, bool integral) {
  if (integral && std::nearbyint(value) == value && std::fabs(value) < 1e15) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(),
                                   static_cast<long long>(value));
    return std::string(buf.data(), res.ptr);
  }
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  std::string out(buf.data(), res.ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

std::string render_value(const Cell& cell) {
  if (const auto* num = std::get_if<Numeric>(&cell)) return render_number(num->value, num->integral);
  if (const auto* cat = std::get_if<Category>(&cell)) return cat->code;
  return {};
}

std::string join_enumeration(std::span<const std::string> items, bool oxford_and) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    if (oxford_and && i + 1 == items.size() && items.size() > 1) out += "and ";
    out += items[i];
  }
  return out;
}

std::string column_label(const DatasetSchema& schema, std::size_t column, SerializationMode mode) {
  const std::size_t target = schema.target_index();
  if (mode == SerializationMode::kDescriptive) return schema.columns.at(column).description;
  if (column == target) return "output y";
  return "feature " + std::to_string(column < target ? column + 1 : column);
}

std::string question_body(const Row& row, const DatasetSchema& schema, std::string_view ask_column,
                          SerializationMode mode, const PromptStyle& style) {
  const std::size_t ask = schema.index_of(ask_column);
  const std::size_t target = schema.target_index();
  std::string clauses;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c == ask || c == target || is_missing(row.cells.at(c))) continue;
    std::string clause = column_label(schema, c, mode);
    if (mode == SerializationMode::kDescriptive) clause += value_gloss_clause(schema.columns[c]);
    clause += " is " + render_value(row.cells[c]);
    if (!clauses.empty()) clauses += ", ";
    clauses += clause;
  }
  if (clauses.empty()) {
    throw EmptyRow("row " + std::to_string(row.id) + " has no non-missing input cell");
  }
  return style.question_prefix + clauses + ", then what is the " + column_label(schema, ask, mode);
}

std::string serialize_question(const Row& row, const DatasetSchema& schema,
                               std::string_view ask_column, SerializationMode mode) {
  return question_body(row, schema, ask_column, mode, schema.style) + "?";
}

PromptSegment render_task_description(const DatasetSchema& schema, SerializationMode mode) {
  std::string text(kReadInstruction);
  if (schema.task_kind == TaskKind::kClassification) {
    const auto tokens = schema.class_tokens();
    text += "predict whether its value is " + or_list(tokens) + ". You must choose in " +
            bracket_list(tokens) + ".";
    if (auto glosses = class_gloss_sentence(schema, mode); !glosses.empty()) text += " " + glosses;
  } else {
    text += "predict its value.";
  }
  text += "\n" + dataset_sentence(schema, mode) + " The output variable is the " +
          target_label(schema, mode) + ".";
  return PromptSegment(SegmentKind::kTask, std::move(text));
}

std::string render_target_question(const Row& row, const DatasetSchema& schema,
                                   SerializationMode mode, std::string_view answer) {
  std::string q = question_body(row, schema, schema.target, mode, schema.style);
  if (schema.task_kind == TaskKind::kClassification) {
    q += class_choice_suffix(schema, mode);
  } else {
    q += "?";
  }
  return with_answer(std::move(q), answer);
}

PromptSegment render_labeled_demo(const Row& row, const DatasetSchema& schema,
                                  SerializationMode mode) {
  std::string answer;
  if (schema.task_kind == TaskKind::kClassification) {
    const auto cls = row_class(row, schema);
    if (!cls) throw Error("labeled demo row " + std::to_string(row.id) + " has no class label");
    answer = schema.class_labels[*cls].token;
  } else {
    const Cell& cell = row.cells.at(schema.target_index());
    if (is_missing(cell)) throw Error("labeled demo row " + std::to_string(row.id) + " has no target");
    answer = render_value(cell);
  }
  return PromptSegment(SegmentKind::kLabeledDemo, render_target_question(row, schema, mode, answer));
}

PromptSegment render_test_query(const Row& row, const DatasetSchema& schema,
                                SerializationMode mode) {
  return PromptSegment(SegmentKind::kTestQuery, render_target_question(row, schema, mode, {}));
}

std::optional<PromptSegment> render_pseudo_demo(const Row& row, const DatasetSchema& schema,
                                                std::string_view f_k, SerializationMode mode,
                                                const PromptStyle& style) {
  const std::size_t col = schema.index_of(f_k);
  const Cell& cell = row.cells.at(col);
  if (is_missing(cell)) return std::nullopt;
  std::string q = question_body(row, schema, f_k, mode, style) + style.pseudo_terminator;
  return PromptSegment(SegmentKind::kPseudoDemo, with_answer(std::move(q), render_value(cell)));
}

CorrelationInstruction render_correlation_instruction(
    std::span<const std::string> candidate_labels, const DatasetSchema& target_schema,
    SerializationMode mode, bool retry_hint) {
  if (candidate_labels.empty()) throw NoCandidateFeatures("no candidate features to choose from");
  const bool oxford = target_schema.style.oxford_and;
  const std::string enumeration = join_enumeration(candidate_labels, oxford);
  std::string goal;
  std::string output;
  if (target_schema.task_kind == TaskKind::kClassification) {
    goal = "predict whether its value is " + or_list(target_schema.class_tokens());
    const std::string glosses = class_gloss_sentence(target_schema, mode);
    output = glosses.empty() ? " the " + target_label(target_schema, mode) + "." : ": " + glosses;
  } else {
    goal = "predict its value";
    output = " the " + target_label(target_schema, mode) + ".";
  }

  std::string opening(kReadInstruction);
  opening += "choose the most important feature to " + goal + ". You must choose in [" +
             enumeration + "].\nThe dataset consists of " +
             std::to_string(candidate_labels.size()) + " input variables: " + enumeration +
             ". The output variable is" + output;

  std::string closing = "Choose the most important feature to ";
  closing += target_schema.task_kind == TaskKind::kClassification
                 ? "predict its value is " + or_list(target_schema.class_tokens())
                 : std::string("predict its value");
  closing += ".";
  if (retry_hint) closing += " " + std::string(kCorrelationRetryHint);
  closing += " Answer:";

  return {PromptSegment(SegmentKind::kCorrelationInstruction, std::move(opening)),
          PromptSegment(SegmentKind::kCorrelationInstruction, std::move(closing))};
}

std::string normalize_for_golden(std::string_view text) {
  std::string lf;
  lf.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      lf.push_back('\n');
      continue;
    }
    lf.push_back(text[i]);
  }

  std::string out;
  out.reserve(lf.size());
  constexpr std::string_view kAnswer = "Answer:";
  for (std::size_t i = 0; i < lf.size();) {
    if (lf[i] == '\n') {
      // Drop trailing spaces of the line, then collapse the newline run.
      while (!out.empty() && (out.back() == ' ' || out.back() == '\t')) out.pop_back();
      out.push_back('\n');
      while (i < lf.size() && (lf[i] == '\n' || lf[i] == ' ' || lf[i] == '\t')) {
        if (lf[i] != '\n') {
          // leading whitespace of a following line is significant unless blank
          std::size_t j = i;
          while (j < lf.size() && (lf[j] == ' ' || lf[j] == '\t')) ++j;
          if (j < lf.size() && lf[j] != '\n') break;
          i = j;
          continue;
        }
        ++i;
      }
      continue;
    }
    if (lf.compare(i, kAnswer.size(), kAnswer) == 0) {
      out.append(kAnswer);
      i += kAnswer.size();
      std::size_t j = i;
      while (j < lf.size() && lf[j] == ' ') ++j;
      if (j < lf.size() && lf[j] != '\n') {
        out.push_back(' ');
        i = j;
      }
      continue;
    }
    out.push_back(lf[i++]);
  }
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
  while (!out.empty() && out.front() == '\n') out.erase(out.begin());
  return out;
}

}  // namespace p2t
