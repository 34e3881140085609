#include "p2t/encoding.hpp"

#include <algorithm>
#include <set>

#include "p2t/errors.hpp"

namespace p2t {

FeatureEncoder FeatureEncoder::fit(const DatasetSchema& schema, std::span<const Row> fit_rows) {
  FeatureEncoder enc;
  std::size_t offset = 0;
  for (std::size_t c : schema.feature_indices()) {
    const ColumnSpec& col = schema.columns[c];
    Block block;
    block.column = c;
    block.kind = col.kind;
    block.offset = offset;
    if (col.kind == ColumnKind::kCategorical) {
      block.codes = col.codes;
      block.width = col.codes.size();
    } else {
      for (const Row& row : fit_rows) {
        const auto* num = std::get_if<Numeric>(&row.cells.at(c));
        if (!num) continue;
        if (!block.seen) {
          block.min = block.max = num->value;
          block.seen = true;
        } else {
          block.min = std::min(block.min, num->value);
          block.max = std::max(block.max, num->value);
        }
      }
    }
    offset += block.width;
    enc.blocks_.push_back(std::move(block));
  }
  enc.width_ = offset;
  return enc;
}

Vector FeatureEncoder::encode(const Row& row) const {
  Vector out(width_, 0.0);
  for (const Block& block : blocks_) {
    const Cell& cell = row.cells.at(block.column);
    if (block.kind == ColumnKind::kNumeric) {
      const auto* num = std::get_if<Numeric>(&cell);
      // Constant (or never observed) columns encode as 0.
      if (!num || !block.seen || block.max == block.min) continue;
      out[block.offset] = (num->value - block.min) / (block.max - block.min);
    } else if (const auto* cat = std::get_if<Category>(&cell)) {
      const auto it = std::find(block.codes.begin(), block.codes.end(), cat->code);
      if (it != block.codes.end()) {
        out[block.offset + static_cast<std::size_t>(it - block.codes.begin())] = 1.0;
      }
    }
  }
  return out;
}

Matrix FeatureEncoder::encode(std::span<const Row> rows) const {
  Matrix out;
  out.reserve(rows.size());
  for (const Row& row : rows) out.push_back(encode(row));
  return out;
}

EncodedTable encode_for_baselines(const TableDataset& ds, std::span<const Row> fit_rows) {
  if (fit_rows.empty()) throw ConfigError("encode_for_baselines needs at least one fit row");
  EncodedTable table;
  table.encoder = FeatureEncoder::fit(ds.schema, fit_rows);
  table.matrix = table.encoder.encode(ds.rows);
  return table;
}

MergedTable zero_pad_union(std::span<const Row> target_rows, std::span<const Row> source_rows,
                           const DatasetSchema& target_schema,
                           const DatasetSchema& source_schema) {
  MergedTable merged;
  merged.schema = target_schema;
  merged.schema.name = target_schema.name + "+" + source_schema.name;

  // source column index -> merged column index (absent for the dropped label)
  std::vector<std::optional<std::size_t>> source_to_merged(source_schema.columns.size());
  const std::size_t source_target = source_schema.target_index();
  std::vector<std::string> conflicts;
  for (std::size_t c = 0; c < source_schema.columns.size(); ++c) {
    const ColumnSpec& col = source_schema.columns[c];
    if (c == source_target && col.name != target_schema.target) continue;
    if (auto existing = merged.schema.find(col.name)) {
      ColumnSpec& dst = merged.schema.columns[*existing];
      if (dst.kind != col.kind) {
        conflicts.push_back(col.name);
        continue;
      }
      if (col.name == target_schema.target) continue;  // target semantics stay with the target
      for (const auto& code : col.codes) {
        if (!dst.admits(code)) dst.codes.push_back(code);
      }
      for (const auto& [code, gloss] : col.value_glosses) dst.value_glosses.emplace(code, gloss);
      source_to_merged[c] = *existing;
    } else {
      source_to_merged[c] = merged.schema.columns.size();
      merged.schema.columns.push_back(col);
    }
  }
  if (!conflicts.empty()) {
    std::string list;
    for (const auto& name : conflicts) list += (list.empty() ? "" : ", ") + name;
    throw SchemaMismatch("conflicting column kinds in zero_pad_union: " + list, conflicts);
  }

  const std::size_t width = merged.schema.columns.size();
  for (const Row& row : target_rows) {
    Row out{row.id, row.cells};
    out.cells.resize(width, Missing{});
    merged.target_rows.push_back(std::move(out));
  }
  for (const Row& row : source_rows) {
    Row out{row.id, std::vector<Cell>(width, Missing{})};
    for (std::size_t c = 0; c < row.cells.size(); ++c) {
      if (source_to_merged[c]) out.cells[*source_to_merged[c]] = row.cells[c];
    }
    merged.source_rows.push_back(std::move(out));
  }
  return merged;
}

}  // namespace p2t
