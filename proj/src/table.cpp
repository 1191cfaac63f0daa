#include "gformula/table.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gformula/error.hpp"

namespace gformula {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    out.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

bool in_scope(const LongitudinalTable& t, std::size_t row, PatternScope scope) {
  switch (scope) {
    case PatternScope::original_rows:
      return t.original(row);
    case PatternScope::augmented_rows:
      return !t.original(row);
    case PatternScope::all_rows:
      return true;
  }
  return true;
}

}  // namespace

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  if (columns_.empty()) {
    throw Error::validation("schema has no columns");
  }
  int outcome_count = 0;
  int last_time = columns_.front().time_index;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& c = columns_[i];
    if (c.name.empty()) {
      throw Error::validation("schema column without a name");
    }
    for (std::size_t j = i + 1; j < columns_.size(); ++j) {
      if (columns_[j].name == c.name) {
        throw Error::validation("duplicate column name: " + c.name);
      }
    }
    if (c.time_index < 0) {
      throw Error::validation("negative time index on column " + c.name);
    }
    if (c.time_index < last_time) {
      throw Error::validation("columns not in causal time order at " + c.name);
    }
    last_time = c.time_index;
    if (c.role == ColumnRole::outcome) {
      ++outcome_count;
      if (i + 1 != columns_.size()) {
        throw Error::validation("outcome column must be last in causal order");
      }
    }
  }
  if (outcome_count != 1) {
    throw Error::validation("schema must declare exactly one outcome column");
  }
}

std::size_t Schema::index_of(const std::string& name) const {
  if (auto idx = find(name)) {
    return *idx;
  }
  throw Error::validation("unknown column: " + name);
}

std::optional<std::size_t> Schema::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> Schema::treatment_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == ColumnRole::treatment) {
      out.push_back(i);
    }
  }
  return out;
}

std::size_t Schema::outcome_index() const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == ColumnRole::outcome) {
      return i;
    }
  }
  throw Error::validation("schema has no outcome column");
}

void validate_regime(const Regime& regime, const Schema& schema) {
  const auto treatments = schema.treatment_indices();
  std::vector<bool> covered(treatments.size(), false);
  for (const auto& [name, value] : regime.assignments) {
    const auto idx = schema.find(name);
    if (!idx) {
      throw Error::validation("regime assigns unknown column " + name);
    }
    const auto& col = schema.column(*idx);
    if (col.role != ColumnRole::treatment) {
      throw Error::validation("regime assigns non-treatment column " + name);
    }
    if (col.kind == ColumnKind::binary && value != 0.0 && value != 1.0) {
      throw Error::validation("regime value for binary treatment " + name + " must be 0 or 1");
    }
    for (std::size_t t = 0; t < treatments.size(); ++t) {
      if (treatments[t] == *idx) {
        if (covered[t]) {
          throw Error::validation("regime assigns treatment " + name + " twice");
        }
        covered[t] = true;
      }
    }
  }
  for (std::size_t t = 0; t < treatments.size(); ++t) {
    if (!covered[t]) {
      throw Error::validation("regime does not cover treatment column " +
                              schema.column(treatments[t]).name);
    }
  }
}

LongitudinalTable::LongitudinalTable(Schema schema, std::size_t n_rows)
    : schema_(std::move(schema)), n_rows_(n_rows) {
  values_.assign(n_rows_ * schema_.size(), 0.0);
  missing_.assign(n_rows_ * schema_.size(), 1);
  origin_.assign(n_rows_, 1);
}

std::size_t LongitudinalTable::n_original() const {
  std::size_t count = 0;
  for (auto o : origin_) {
    count += o;
  }
  return count;
}

std::size_t LongitudinalTable::n_missing_cells() const {
  std::size_t count = 0;
  for (auto m : missing_) {
    count += m;
  }
  return count;
}

void LongitudinalTable::set_cell(std::size_t row, std::size_t col, double value) {
  values_[row * n_cols() + col] = value;
  missing_[row * n_cols() + col] = 0;
}

void LongitudinalTable::set_missing(std::size_t row, std::size_t col) {
  values_[row * n_cols() + col] = 0.0;
  missing_[row * n_cols() + col] = 1;
}

std::size_t LongitudinalTable::append_row(bool is_original) {
  const std::size_t row = n_rows_;
  ++n_rows_;
  values_.resize(n_rows_ * n_cols(), 0.0);
  missing_.resize(n_rows_ * n_cols(), 1);
  origin_.push_back(is_original ? 1 : 0);
  return row;
}

std::vector<double> LongitudinalTable::observed_values(std::size_t col, bool original_only) const {
  std::vector<double> out;
  for (std::size_t r = 0; r < n_rows_; ++r) {
    if (original_only && !original(r)) {
      continue;
    }
    if (observed(r, col)) {
      out.push_back(cell(r, col));
    }
  }
  return out;
}

LongitudinalTable LongitudinalTable::select_rows(const std::vector<std::size_t>& rows) const {
  LongitudinalTable out(schema_, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t src = rows[i];
    if (src >= n_rows_) {
      throw Error::validation("row index out of range in select_rows");
    }
    out.set_origin(i, original(src));
    for (std::size_t c = 0; c < n_cols(); ++c) {
      if (observed(src, c)) {
        out.set_cell(i, c, cell(src, c));
      }
    }
  }
  return out;
}

LongitudinalTable augment(const LongitudinalTable& table, const Regime& regime, std::size_t n_syn) {
  if (n_syn < 1) {
    throw Error::validation("augment requires n_syn >= 1");
  }
  validate_regime(regime, table.schema());

  LongitudinalTable out = table;
  std::vector<std::pair<std::size_t, double>> treatment_values;
  treatment_values.reserve(regime.assignments.size());
  for (const auto& [name, value] : regime.assignments) {
    treatment_values.emplace_back(table.schema().index_of(name), value);
  }
  for (std::size_t i = 0; i < n_syn; ++i) {
    const std::size_t row = out.append_row(false);
    for (const auto& [col, value] : treatment_values) {
      out.set_cell(row, col, value);
    }
  }
  return out;
}

MissingnessPattern missingness_pattern(const LongitudinalTable& table, PatternScope scope) {
  if (table.n_rows() == 0) {
    throw Error::validation("missingness_pattern on empty table");
  }
  bool any_missing = false;
  bool monotone = true;
  const auto& schema = table.schema();
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    if (!in_scope(table, r, scope)) {
      continue;
    }
    bool seen_missing = false;
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      const bool cell_missing = table.missing(r, c);
      any_missing = any_missing || cell_missing;
      // Observed treatments carry no imputation burden and do not break a
      // sequential pass, so they are transparent to the pattern.
      if (schema.column(c).role == ColumnRole::treatment && !cell_missing) {
        continue;
      }
      if (cell_missing) {
        seen_missing = true;
      } else if (seen_missing) {
        monotone = false;
      }
    }
  }
  if (!any_missing) {
    return MissingnessPattern::complete;
  }
  return monotone ? MissingnessPattern::monotone : MissingnessPattern::non_monotone;
}

LongitudinalTable from_csv_text(const std::string& text, const Schema& schema) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error::io("empty CSV input");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = split_line(line);
  if (header.size() != schema.size()) {
    throw Error::validation("CSV header has " + std::to_string(header.size()) +
                            " columns, schema declares " + std::to_string(schema.size()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] != schema.column(c).name) {
      throw Error::validation("CSV header mismatch at column " + std::to_string(c + 1) +
                              ": got '" + header[c] + "', expected '" + schema.column(c).name + "'");
    }
  }

  LongitudinalTable table(schema, 0);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (trim(line).empty()) {
      continue;
    }
    const auto fields = split_line(line);
    if (fields.size() != schema.size()) {
      throw Error::validation("CSV line " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(schema.size()));
    }
    const std::size_t row = table.append_row(true);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      if (f.empty() || f == "NA") {
        table.set_missing(row, c);
        continue;
      }
      double value = 0.0;
      const auto* begin = f.data();
      const auto* end = f.data() + f.size();
      const auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec != std::errc{} || ptr != end) {
        throw Error::validation("malformed numeric cell '" + f + "' at line " +
                                std::to_string(line_no) + ", column " + schema.column(c).name);
      }
      if (schema.column(c).kind == ColumnKind::binary && value != 0.0 && value != 1.0) {
        throw Error::validation("binary column " + schema.column(c).name + " has value '" + f +
                                "' at line " + std::to_string(line_no));
      }
      table.set_cell(row, c, value);
    }
  }
  if (table.n_rows() == 0) {
    throw Error::validation("CSV contains a header but zero data rows");
  }
  return table;
}

LongitudinalTable load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error::io("cannot open " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_csv_text(buffer.str(), schema);
}

std::string to_csv(const LongitudinalTable& table) {
  std::string out;
  const auto& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c > 0) {
      out += ',';
    }
    out += schema.column(c).name;
  }
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      if (c > 0) {
        out += ',';
      }
      if (table.missing(r, c)) {
        out += "NA";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", table.cell(r, c));
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

void write_csv(const LongitudinalTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error::io("cannot open " + path + " for writing");
  }
  out << to_csv(table);
  if (!out) {
    throw Error::io("write failed for " + path);
  }
}

}  // namespace gformula
