#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace p2t {

enum class ColumnKind { kNumeric, kCategorical };
enum class TaskKind { kClassification, kRegression };

// Surface wording of serialized questions. Two presets exist: "lift" (the
// default, "Question: If the x is 1, ...") and "compact" ("Question:When x is
// 1, ..."). The style lives in the schema manifest so new datasets need no
// code changes.
struct PromptStyle {
  enum class ChoiceLayout {
    kChooseBetween,        // "? Choose between [a, b]. <glosses>"
    kChoicesAfterGlosses,  // "? <glosses> Choices: [a, b].?"
  };

  std::string question_prefix = "Question: If the ";
  std::string pseudo_terminator = ".";
  bool oxford_and = true;  // enumerations end with ", and <last>"
  ChoiceLayout choice_layout = ChoiceLayout::kChooseBetween;

  static PromptStyle lift();
  static PromptStyle compact();
  static PromptStyle from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  bool operator==(const PromptStyle&) const = default;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::string description;
  std::vector<std::string> codes;  // admissible categorical codes, in display order
  std::map<std::string, std::string> value_glosses;

  bool admits(std::string_view code) const;
};

struct ClassLabel {
  std::string token;
  std::string gloss;
};

struct DatasetSchema {
  std::string name;
  std::vector<ColumnSpec> columns;
  std::string target;
  std::vector<ClassLabel> class_labels;
  TaskKind task_kind = TaskKind::kClassification;
  PromptStyle style;

  std::optional<std::size_t> find(std::string_view column) const;
  std::size_t index_of(std::string_view column) const;  // throws SchemaMismatch
  const ColumnSpec& column(std::string_view name) const { return columns[index_of(name)]; }
  std::size_t target_index() const { return index_of(target); }
  const ColumnSpec& target_column() const { return columns[target_index()]; }

  // Column indices excluding the target, in schema order.
  std::vector<std::size_t> feature_indices() const;
  std::size_t feature_count() const { return columns.size() - 1; }

  // Maps a target category code onto its class index (class_labels order).
  std::optional<std::size_t> class_of_code(std::string_view code) const;
  std::vector<std::string> class_tokens() const;

  // Throws SchemaMismatch describing the first violated invariant.
  void validate() const;

  static DatasetSchema from_json(const nlohmann::json& j);
  static DatasetSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct Missing {
  bool operator==(const Missing&) const = default;
};

struct Numeric {
  double value = 0.0;
  bool integral = false;  // literal had no decimal point or exponent ("53" vs "53.0")
  bool operator==(const Numeric&) const = default;
};

struct Category {
  std::string code;
  bool operator==(const Category&) const = default;
};

using Cell = std::variant<Missing, Numeric, Category>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<Missing>(cell); }

// One table row; cells are aligned with DatasetSchema::columns. `id` is the
// row's position in the file it was loaded from and serves as row identity.
struct Row {
  std::size_t id = 0;
  std::vector<Cell> cells;

  bool operator==(const Row&) const = default;
};

struct TableDataset {
  DatasetSchema schema;
  std::vector<Row> rows;
  std::string provenance;

  void validate() const;
};

// Throws CellParseError / SchemaMismatch when the row violates the schema.
void validate_row(const Row& row, const DatasetSchema& schema, std::size_t row_index);

// Class index of a row's target cell, if present and a known class.
std::optional<std::size_t> row_class(const Row& row, const DatasetSchema& schema);
std::optional<double> row_number(const Row& row, std::size_t column);

struct CsvOptions {
  std::vector<std::string> missing_sentinels = {"", "?"};
};

// RFC 4180 reader. Returns the header followed by records.
std::vector<std::vector<std::string>> read_csv_records(std::istream& in);

TableDataset load_csv(const std::filesystem::path& csv_path, const DatasetSchema& schema,
                      const CsvOptions& options = {});
TableDataset load_csv(const std::filesystem::path& csv_path,
                      const std::filesystem::path& schema_path, const CsvOptions& options = {});

// Parses one CSV field into a cell of the given column (row index for errors).
Cell parse_cell(std::string_view text, const ColumnSpec& column, std::size_t row,
                const CsvOptions& options = {});

}  // namespace p2t
