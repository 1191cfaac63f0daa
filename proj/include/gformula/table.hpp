#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gformula {

enum class ColumnKind { continuous, binary };

enum class ColumnRole { baseline_confounder, timevarying_confounder, treatment, outcome };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  ColumnRole role = ColumnRole::timevarying_confounder;
  int time_index = 0;
};

// Declaration order *is* the causal time order L_0, A_0, L_1, A_1, ..., Y.
// Time indices must be non-decreasing and the single outcome column last.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const ColumnSpec& column(std::size_t i) const { return columns_[i]; }

  std::size_t index_of(const std::string& name) const;
  std::optional<std::size_t> find(const std::string& name) const;
  std::vector<std::size_t> treatment_indices() const;
  std::size_t outcome_index() const;

 private:
  std::vector<ColumnSpec> columns_;
};

// Fixed values (a_0,...,a_T) for every treatment column: a static regime.
struct Regime {
  std::string name;
  std::vector<std::pair<std::string, double>> assignments;
};

// Throws unless the regime covers every treatment column exactly once with
// values admissible for the column kind.
void validate_regime(const Regime& regime, const Schema& schema);

// Rectangular longitudinal dataset with an explicit missingness mask and a
// per-row origin flag (original sample vs augmented counterfactual rows).
// Shared instances are treated as read-only by the library: every operation
// that changes data works on / returns a fresh table.
class LongitudinalTable {
 public:
  LongitudinalTable() = default;
  explicit LongitudinalTable(Schema schema, std::size_t n_rows = 0);

  const Schema& schema() const { return schema_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return schema_.size(); }

  double cell(std::size_t row, std::size_t col) const { return values_[row * n_cols() + col]; }
  bool observed(std::size_t row, std::size_t col) const { return !missing_[row * n_cols() + col]; }
  bool missing(std::size_t row, std::size_t col) const { return missing_[row * n_cols() + col] != 0; }
  bool original(std::size_t row) const { return origin_[row] != 0; }

  std::size_t n_original() const;
  std::size_t n_missing_cells() const;

  void set_cell(std::size_t row, std::size_t col, double value);
  void set_missing(std::size_t row, std::size_t col);
  void set_origin(std::size_t row, bool is_original) { origin_[row] = is_original ? 1 : 0; }

  // Appends a fully-missing row and returns its index.
  std::size_t append_row(bool is_original);

  // Observed values of one column across rows accepted by `original_only`.
  std::vector<double> observed_values(std::size_t col, bool original_only) const;

  // New table keeping rows[i] in order (used by bootstrap resampling).
  LongitudinalTable select_rows(const std::vector<std::size_t>& rows) const;

 private:
  Schema schema_;
  std::size_t n_rows_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> missing_;
  std::vector<std::uint8_t> origin_;
};

// Appends n_syn rows: treatments set to the regime, confounders and outcome
// masked missing, origin = augmented. The original block is untouched.
LongitudinalTable augment(const LongitudinalTable& table, const Regime& regime, std::size_t n_syn);

enum class PatternScope { original_rows, augmented_rows, all_rows };

enum class MissingnessPattern { complete, monotone, non_monotone };

// complete: no missing cell in scope. monotone: per row, walking cells in
// causal order but skipping observed treatment cells, missing cells form a
// suffix -- exactly the patterns a single sequential pass can complete.
MissingnessPattern missingness_pattern(const LongitudinalTable& table,
                                       PatternScope scope = PatternScope::original_rows);

// CSV with a header row matching the schema; missing cells read as `NA` or an
// empty field and written as `NA`; floats written with 17 significant digits
// so a round trip is lossless.
LongitudinalTable load_csv(const std::string& path, const Schema& schema);
void write_csv(const LongitudinalTable& table, const std::string& path);

std::string to_csv(const LongitudinalTable& table);
LongitudinalTable from_csv_text(const std::string& text, const Schema& schema);

}  // namespace gformula
