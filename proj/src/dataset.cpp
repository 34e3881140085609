#include "p2t/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "p2t/errors.hpp"

namespace p2t {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

ColumnKind parse_kind(const std::string& kind) {
  if (kind == "numeric") return ColumnKind::kNumeric;
  if (kind == "categorical") return ColumnKind::kCategorical;
  throw SchemaMismatch("unknown column kind '" + kind + "'");
}

TaskKind parse_task_kind(const std::string& kind) {
  if (kind == "classification") return TaskKind::kClassification;
  if (kind == "regression") return TaskKind::kRegression;
  throw SchemaMismatch("unknown task_kind '" + kind + "'");
}

}  // namespace

PromptStyle PromptStyle::lift() { return PromptStyle{}; }

PromptStyle PromptStyle::compact() {
  PromptStyle style;
  style.question_prefix = "Question:When ";
  style.pseudo_terminator = "?";
  style.oxford_and = false;
  style.choice_layout = ChoiceLayout::kChoicesAfterGlosses;
  return style;
}

PromptStyle PromptStyle::from_json(const nlohmann::json& j) {
  auto preset = [](const std::string& name) {
    if (name == "lift") return lift();
    if (name == "compact") return compact();
    throw SchemaMismatch("unknown prompt_style preset '" + name + "'");
  };
  if (j.is_null()) return lift();
  if (j.is_string()) return preset(j.get<std::string>());
  if (!j.is_object()) throw SchemaMismatch("prompt_style must be a string or an object");

  PromptStyle style = preset(j.value("preset", std::string("lift")));
  if (j.contains("question_prefix")) style.question_prefix = j.at("question_prefix").get<std::string>();
  if (j.contains("pseudo_terminator")) {
    style.pseudo_terminator = j.at("pseudo_terminator").get<std::string>();
  }
  if (j.contains("oxford_and")) style.oxford_and = j.at("oxford_and").get<bool>();
  if (j.contains("choice_layout")) {
    const auto layout = j.at("choice_layout").get<std::string>();
    if (layout == "choose_between") {
      style.choice_layout = ChoiceLayout::kChooseBetween;
    } else if (layout == "choices_after_glosses") {
      style.choice_layout = ChoiceLayout::kChoicesAfterGlosses;
    } else {
      throw SchemaMismatch("unknown choice_layout '" + layout + "'");
    }
  }
  return style;
}

nlohmann::json PromptStyle::to_json() const {
  return {{"question_prefix", question_prefix},
          {"pseudo_terminator", pseudo_terminator},
          {"oxford_and", oxford_and},
          {"choice_layout", choice_layout == ChoiceLayout::kChooseBetween
                                ? "choose_between"
                                : "choices_after_glosses"}};
}

bool ColumnSpec::admits(std::string_view code) const {
  return std::find(codes.begin(), codes.end(), code) != codes.end();
}

std::optional<std::size_t> DatasetSchema::find(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == column) return i;
  }
  return std::nullopt;
}

std::size_t DatasetSchema::index_of(std::string_view column) const {
  if (auto idx = find(column)) return *idx;
  throw SchemaMismatch("unknown column '" + std::string(column) + "'", {std::string(column)});
}

std::vector<std::size_t> DatasetSchema::feature_indices() const {
  std::vector<std::size_t> out;
  const auto t = find(target);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (!t || i != *t) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> DatasetSchema::class_of_code(std::string_view code) const {
  if (task_kind != TaskKind::kClassification) return std::nullopt;
  const ColumnSpec& col = target_column();
  if (col.codes.empty()) {
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
      if (class_labels[i].token == code) return i;
    }
    return std::nullopt;
  }
  for (std::size_t i = 0; i < col.codes.size() && i < class_labels.size(); ++i) {
    if (col.codes[i] == code) return i;
  }
  return std::nullopt;
}

std::vector<std::string> DatasetSchema::class_tokens() const {
  std::vector<std::string> out;
  out.reserve(class_labels.size());
  for (const auto& label : class_labels) out.push_back(label.token);
  return out;
}

void DatasetSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& col : columns) {
    if (col.name.empty()) throw SchemaMismatch("column with empty name");
    if (!seen.insert(col.name).second) {
      throw SchemaMismatch("duplicate column '" + col.name + "'", {col.name});
    }
    if (col.kind == ColumnKind::kNumeric && !col.value_glosses.empty()) {
      throw SchemaMismatch("numeric column '" + col.name + "' carries value_glosses", {col.name});
    }
    if (col.kind == ColumnKind::kCategorical && col.name != target && col.codes.empty()) {
      throw SchemaMismatch("categorical column '" + col.name + "' lists no codes", {col.name});
    }
    for (const auto& [code, gloss] : col.value_glosses) {
      if (!col.admits(code)) {
        throw SchemaMismatch("gloss for unknown code '" + code + "' in column '" + col.name + "'",
                             {col.name});
      }
    }
  }
  const auto t = find(target);
  if (!t) throw SchemaMismatch("target '" + target + "' is not a column", {target});

  if (task_kind == TaskKind::kClassification) {
    if (class_labels.size() < 2) throw SchemaMismatch("classification needs >= 2 class_labels");
    const ColumnSpec& col = columns[*t];
    if (col.kind != ColumnKind::kCategorical) {
      throw SchemaMismatch("classification target '" + target + "' must be categorical", {target});
    }
    if (!col.codes.empty() && col.codes.size() != class_labels.size()) {
      throw SchemaMismatch("target codes and class_labels differ in length", {target});
    }
    std::set<std::string> tokens;
    for (const auto& label : class_labels) {
      if (label.token.empty()) throw SchemaMismatch("empty class token");
      if (!tokens.insert(label.token).second) {
        throw SchemaMismatch("duplicate class token '" + label.token + "'");
      }
    }
  } else {
    if (!class_labels.empty()) throw SchemaMismatch("regression schema lists class_labels");
    if (columns[*t].kind != ColumnKind::kNumeric) {
      throw SchemaMismatch("regression target '" + target + "' must be numeric", {target});
    }
  }
}

DatasetSchema DatasetSchema::from_json(const nlohmann::json& j) {
  DatasetSchema schema;
  try {
    schema.name = j.value("name", std::string());
    for (const auto& c : j.at("columns")) {
      ColumnSpec col;
      col.name = c.at("name").get<std::string>();
      col.kind = parse_kind(c.at("kind").get<std::string>());
      col.description = c.value("description", col.name);
      if (c.contains("codes")) col.codes = c.at("codes").get<std::vector<std::string>>();
      if (c.contains("value_glosses")) {
        for (const auto& [code, gloss] : c.at("value_glosses").items()) {
          col.value_glosses.emplace(code, gloss.get<std::string>());
          if (!c.contains("codes") && !col.admits(code)) col.codes.push_back(code);
        }
      }
      schema.columns.push_back(std::move(col));
    }
    schema.target = j.at("target").get<std::string>();
    if (j.contains("class_labels")) {
      for (const auto& pair : j.at("class_labels")) {
        if (!pair.is_array() || pair.size() != 2) {
          throw SchemaMismatch("class_labels entries must be [token, gloss] pairs");
        }
        schema.class_labels.push_back({pair[0].get<std::string>(), pair[1].get<std::string>()});
      }
    }
    schema.task_kind = parse_task_kind(j.value("task_kind", std::string("classification")));
    schema.style = PromptStyle::from_json(j.value("prompt_style", nlohmann::json()));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("malformed schema manifest: ") + e.what());
  }
  schema.validate();
  return schema;
}

DatasetSchema DatasetSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch("schema manifest " + path.string() + " does not parse: " + e.what());
  }
  auto schema = from_json(j);
  if (schema.name.empty()) schema.name = path.stem().string();
  return schema;
}

nlohmann::json DatasetSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json col = {{"name", c.name},
                          {"kind", c.kind == ColumnKind::kNumeric ? "numeric" : "categorical"},
                          {"description", c.description}};
    if (!c.codes.empty()) col["codes"] = c.codes;
    if (!c.value_glosses.empty()) col["value_glosses"] = c.value_glosses;
    cols.push_back(std::move(col));
  }
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& l : class_labels) labels.push_back({l.token, l.gloss});
  return {{"name", name},
          {"columns", cols},
          {"target", target},
          {"class_labels", labels},
          {"task_kind", task_kind == TaskKind::kClassification ? "classification" : "regression"},
          {"prompt_style", style.to_json()}};
}

void validate_row(const Row& row, const DatasetSchema& schema, std::size_t row_index) {
  if (row.cells.size() != schema.columns.size()) {
    throw SchemaMismatch("row " + std::to_string(row_index) + " has " +
                         std::to_string(row.cells.size()) + " cells, schema has " +
                         std::to_string(schema.columns.size()));
  }
  for (std::size_t c = 0; c < row.cells.size(); ++c) {
    const ColumnSpec& col = schema.columns[c];
    const Cell& cell = row.cells[c];
    if (const auto* num = std::get_if<Numeric>(&cell)) {
      if (col.kind != ColumnKind::kNumeric) {
        throw CellParseError("numeric cell in categorical column", row_index, col.name);
      }
      if (!std::isfinite(num->value)) {
        throw CellParseError("non-finite numeric cell", row_index, col.name);
      }
    } else if (const auto* cat = std::get_if<Category>(&cell)) {
      if (col.kind != ColumnKind::kCategorical) {
        throw CellParseError("category cell in numeric column", row_index, col.name);
      }
      const bool open_target = col.name == schema.target && col.codes.empty();
      if (open_target ? !schema.class_of_code(cat->code) : !col.admits(cat->code)) {
        throw CellParseError("unknown category code '" + cat->code + "'", row_index, col.name);
      }
    }
  }
}

void TableDataset::validate() const {
  schema.validate();
  for (std::size_t i = 0; i < rows.size(); ++i) validate_row(rows[i], schema, i);
}

std::optional<std::size_t> row_class(const Row& row, const DatasetSchema& schema) {
  const auto* cat = std::get_if<Category>(&row.cells.at(schema.target_index()));
  if (!cat) return std::nullopt;
  return schema.class_of_code(cat->code);
}

std::optional<double> row_number(const Row& row, std::size_t column) {
  if (const auto* num = std::get_if<Numeric>(&row.cells.at(column))) return num->value;
  return std::nullopt;
}

std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char ch;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // A blank line is not a record.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };

  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(ch);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(ch);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) throw ConfigError("unterminated quoted CSV field");
  if (!field.empty() || !record.empty()) end_record();
  return records;
}

Cell parse_cell(std::string_view text, const ColumnSpec& column, std::size_t row,
                const CsvOptions& options) {
  const std::string_view value = trim(text);
  for (const auto& sentinel : options.missing_sentinels) {
    if (value == sentinel) return Missing{};
  }
  if (column.kind == ColumnKind::kCategorical) return Category{std::string(value)};

  std::string_view digits = value;
  if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
  double parsed = 0.0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), parsed);
  if (ec != std::errc() || end != digits.data() + digits.size() || !std::isfinite(parsed)) {
    throw CellParseError("row " + std::to_string(row) + ", column '" + column.name +
                             "': cannot parse '" + std::string(value) + "' as a number",
                         row, column.name);
  }
  const bool integral = digits.find_first_of(".eE") == std::string_view::npos;
  return Numeric{parsed, integral};
}

TableDataset load_csv(const std::filesystem::path& csv_path, const DatasetSchema& schema,
                      const CsvOptions& options) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open CSV " + csv_path.string());
  auto records = read_csv_records(in);
  if (records.empty()) throw SchemaMismatch("CSV " + csv_path.string() + " has no header row");

  std::vector<std::string> header;
  for (const auto& h : records.front()) header.emplace_back(trim(h));
  if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) {
    header.front().erase(0, 3);
  }

  std::vector<std::string> offending;
  std::vector<std::size_t> column_of_field(header.size());
  std::set<std::string> header_names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!header_names.insert(header[i]).second) {
      offending.push_back(header[i]);
      continue;
    }
    if (auto idx = schema.find(header[i])) {
      column_of_field[i] = *idx;
    } else {
      offending.push_back(header[i]);
    }
  }
  for (const auto& col : schema.columns) {
    if (!header_names.contains(col.name)) offending.push_back(col.name);
  }
  if (!offending.empty()) {
    std::string list;
    for (const auto& name : offending) list += (list.empty() ? "" : ", ") + name;
    throw SchemaMismatch("CSV header does not match schema; offending columns: " + list,
                         offending);
  }

  TableDataset ds;
  ds.schema = schema;
  ds.provenance = schema.name.empty() ? csv_path.stem().string() : schema.name;
  ds.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row_index = r - 1;
    if (rec.size() != header.size()) {
      throw CellParseError("row " + std::to_string(row_index) + " has " +
                               std::to_string(rec.size()) + " fields, header has " +
                               std::to_string(header.size()),
                           row_index, "");
    }
    Row row{row_index, std::vector<Cell>(schema.columns.size(), Missing{})};
    for (std::size_t f = 0; f < rec.size(); ++f) {
      const std::size_t c = column_of_field[f];
      row.cells[c] = parse_cell(rec[f], schema.columns[c], row_index, options);
    }
    validate_row(row, schema, row_index);
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

TableDataset load_csv(const std::filesystem::path& csv_path,
                      const std::filesystem::path& schema_path, const CsvOptions& options) {
  return load_csv(csv_path, DatasetSchema::load(schema_path), options);
}

}  // namespace p2t
