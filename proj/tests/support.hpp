#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "p2t/dataset.hpp"
#include "p2t/random.hpp"
#include "p2t/serializer.hpp"

namespace p2t::testing {

inline std::filesystem::path data_dir() { return P2T_DATA_DIR; }
inline std::filesystem::path golden_dir() { return P2T_GOLDEN_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("p2t_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline TableDataset load_named(const std::string& name) {
  return load_csv(data_dir() / name / (name + ".csv"), data_dir() / name / "schema.json");
}

// Row from CSV-style field texts in schema column order.
inline Row make_row(const DatasetSchema& schema, const std::vector<std::string>& fields,
                    std::size_t id = 0) {
  Row row{id, {}};
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    row.cells.push_back(parse_cell(fields.at(c), schema.columns[c], id));
  }
  return row;
}

inline ColumnSpec numeric_column(std::string name, std::string description = {}) {
  ColumnSpec c;
  c.name = name;
  c.kind = ColumnKind::kNumeric;
  c.description = description.empty() ? name : description;
  return c;
}

inline ColumnSpec categorical_column(std::string name, std::vector<std::string> codes,
                                     std::string description = {}) {
  ColumnSpec c;
  c.name = name;
  c.kind = ColumnKind::kCategorical;
  c.description = description.empty() ? name : description;
  c.codes = std::move(codes);
  return c;
}

// Binary classification schema over numeric features x0..x{d-1} and label y.
inline DatasetSchema numeric_schema(std::size_t d, std::size_t classes = 2) {
  DatasetSchema s;
  s.name = "synthetic";
  std::vector<std::string> codes;
  for (std::size_t c = 0; c < classes; ++c) {
    s.class_labels.push_back({"class" + std::to_string(c + 1), "group " + std::to_string(c)});
    codes.push_back(std::to_string(c));
  }
  for (std::size_t i = 0; i < d; ++i) {
    s.columns.push_back(numeric_column("x" + std::to_string(i), "measurement " + std::to_string(i)));
  }
  s.columns.push_back(categorical_column("y", codes, "group"));
  s.target = "y";
  s.validate();
  return s;
}

// Random schema with mixed column kinds; the target sits at a random position.
inline DatasetSchema random_schema(Rng& rng, bool allow_regression = true) {
  DatasetSchema s;
  s.name = "random";
  const std::size_t d = 1 + rng.below(7);
  for (std::size_t i = 0; i < d; ++i) {
    if (rng.below(3) == 0) {
      std::vector<std::string> codes;
      const std::size_t k = 2 + rng.below(3);
      for (std::size_t j = 0; j < k; ++j) codes.push_back("c" + std::to_string(j));
      auto col = categorical_column("cat" + std::to_string(i), codes, "category " + std::to_string(i));
      if (rng.below(2)) col.value_glosses[codes[0]] = "the first";
      s.columns.push_back(col);
    } else {
      s.columns.push_back(numeric_column("num" + std::to_string(i), "amount " + std::to_string(i)));
    }
  }
  const bool regression = allow_regression && rng.below(4) == 0;
  ColumnSpec target;
  if (regression) {
    target = numeric_column("target", "outcome");
    s.task_kind = TaskKind::kRegression;
  } else {
    const std::size_t k = 2 + rng.below(3);
    std::vector<std::string> codes;
    for (std::size_t j = 0; j < k; ++j) {
      codes.push_back(std::to_string(j));
      s.class_labels.push_back({"class" + std::to_string(j + 1), "kind " + std::to_string(j)});
    }
    target = categorical_column("target", codes, "outcome");
  }
  s.columns.insert(s.columns.begin() + static_cast<std::ptrdiff_t>(rng.below(d + 1)), target);
  s.target = "target";
  s.style = rng.below(2) ? PromptStyle::lift() : PromptStyle::compact();
  s.validate();
  return s;
}

// Random row with every cell present (numeric values on a coarse grid).
inline Row random_row(Rng& rng, const DatasetSchema& s, std::size_t id) {
  Row row{id, {}};
  for (const auto& col : s.columns) {
    if (col.kind == ColumnKind::kNumeric) {
      const bool integral = rng.below(2);
      const double v = integral ? static_cast<double>(rng.below(100))
                                : static_cast<double>(rng.below(10000)) / 100.0;
      row.cells.push_back(Numeric{v, integral});
    } else {
      row.cells.push_back(Category{col.codes[rng.below(col.codes.size())]});
    }
  }
  return row;
}

}  // namespace p2t::testing
