#include <doctest.h>

#include <fstream>

#include "gformula/error.hpp"
#include "gformula/rng.hpp"
#include "gformula/table.hpp"
#include "helpers.hpp"

using namespace gformula;
using testing_support::example_table;

namespace {

Regime all_ones() {
  Regime r;
  r.name = "all-1";
  r.assignments = {{"A0", 1.0}, {"A1", 1.0}, {"A2", 1.0}};
  return r;
}

Regime all_zeros() {
  Regime r;
  r.name = "all-0";
  r.assignments = {{"A0", 0.0}, {"A1", 0.0}, {"A2", 0.0}};
  return r;
}

}  // namespace

TEST_CASE("five-row example block loads fully observed") {
  const auto table = example_table();
  CHECK(table.n_rows() == 5);
  CHECK(table.n_cols() == 7);
  CHECK(table.n_missing_cells() == 0);
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    CHECK(table.original(r));
  }
  CHECK(table.cell(0, 0) == doctest::Approx(-0.3));
  CHECK(table.cell(4, 6) == doctest::Approx(6.2));
}

TEST_CASE("header-only CSV is rejected") {
  CHECK_THROWS_AS(from_csv_text("L0,A0,L1,A1,L2,A2,Y\n", dgm_schema()), Error);
}

TEST_CASE("NA and empty fields set the mask") {
  const std::string text =
      "L0,A0,L1,A1,L2,A2,Y\n"
      "0.1,0,NA,0,2.0,1,1.0\n"
      "0.2,1,,1,1.0,0,2.0\n";
  const auto table = from_csv_text(text, dgm_schema());
  CHECK(table.missing(0, 2));
  CHECK(table.missing(1, 2));
  CHECK(table.observed(0, 0));
  CHECK(table.n_missing_cells() == 2);
}

TEST_CASE("malformed cells and schema mismatches are validation errors") {
  CHECK_THROWS_AS(from_csv_text("L0,A0,L1,A1,L2,A2,Y\n0.1,0,zap,0,2,1,1\n", dgm_schema()), Error);
  // binary column outside {0,1,NA}
  CHECK_THROWS_AS(from_csv_text("L0,A0,L1,A1,L2,A2,Y\n0.1,2,0.5,0,2,1,1\n", dgm_schema()), Error);
  // header mismatch
  CHECK_THROWS_AS(from_csv_text("X0,A0,L1,A1,L2,A2,Y\n0.1,0,0.5,0,2,1,1\n", dgm_schema()), Error);
  // wrong arity
  CHECK_THROWS_AS(from_csv_text("L0,A0,L1,A1,L2,A2,Y\n0.1,0,0.5,0,2,1\n", dgm_schema()), Error);
}

TEST_CASE("augment appends the counterfactual block") {
  const auto table = example_table();
  const auto augmented = augment(table, all_ones(), 5);
  REQUIRE(augmented.n_rows() == 10);
  CHECK(augmented.n_original() == 5);
  for (std::size_t r = 5; r < 10; ++r) {
    CHECK_FALSE(augmented.original(r));
    // treatments set to the regime, confounders and outcome missing
    CHECK(augmented.cell(r, 1) == 1.0);
    CHECK(augmented.cell(r, 3) == 1.0);
    CHECK(augmented.cell(r, 5) == 1.0);
    CHECK(augmented.missing(r, 0));
    CHECK(augmented.missing(r, 2));
    CHECK(augmented.missing(r, 4));
    CHECK(augmented.missing(r, 6));
  }
}

TEST_CASE("augment is size-exact and leaves the original block untouched") {
  RngStream rng(3);
  auto table = generate_dgm(37, rng);
  const auto augmented = augment(table, all_ones(), 12);
  REQUIRE(augmented.n_rows() == 49);
  for (std::size_t r = 0; r < 37; ++r) {
    CHECK(augmented.original(r));
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(augmented.cell(r, c) == table.cell(r, c));
      CHECK(augmented.observed(r, c) == table.observed(r, c));
    }
  }
}

TEST_CASE("augmenting twice yields two distinguishable blocks") {
  const auto table = example_table();
  auto augmented = augment(table, all_ones(), 4);
  augmented = augment(augmented, all_zeros(), 4);
  REQUIRE(augmented.n_rows() == 13);
  for (std::size_t r = 5; r < 9; ++r) {
    CHECK(augmented.cell(r, 1) == 1.0);
  }
  for (std::size_t r = 9; r < 13; ++r) {
    CHECK(augmented.cell(r, 1) == 0.0);
  }
}

TEST_CASE("augment rejects degenerate inputs") {
  const auto table = example_table();
  CHECK_THROWS_AS(augment(table, all_ones(), 0), Error);
  Regime partial;
  partial.name = "partial";
  partial.assignments = {{"A0", 1.0}};
  CHECK_THROWS_AS(augment(table, partial, 3), Error);
  Regime continuous_value;
  continuous_value.name = "bad";
  continuous_value.assignments = {{"A0", 0.5}, {"A1", 1.0}, {"A2", 1.0}};
  CHECK_THROWS_AS(augment(table, continuous_value, 3), Error);
}

TEST_CASE("missingness pattern classification") {
  auto table = example_table();
  CHECK(missingness_pattern(table) == MissingnessPattern::complete);

  // Suffix missingness in causal order = dropout = monotone.
  auto dropout = example_table();
  dropout.set_missing(1, 4);
  dropout.set_missing(1, 5);
  dropout.set_missing(1, 6);
  CHECK(missingness_pattern(dropout) == MissingnessPattern::monotone);

  // Missing L1 while A1 and later variables stay observed.
  auto intermittent = example_table();
  intermittent.set_missing(2, 2);
  CHECK(missingness_pattern(intermittent) == MissingnessPattern::non_monotone);

  // A missing treatment with later observed cells also breaks monotonicity.
  auto missing_treatment = example_table();
  missing_treatment.set_missing(0, 3);
  CHECK(missingness_pattern(missing_treatment) == MissingnessPattern::non_monotone);
}

TEST_CASE("augmented block alone is monotone by construction") {
  const auto augmented = augment(example_table(), all_ones(), 6);
  CHECK(missingness_pattern(augmented, PatternScope::augmented_rows) ==
        MissingnessPattern::monotone);
  CHECK(missingness_pattern(augmented, PatternScope::original_rows) ==
        MissingnessPattern::complete);
}

TEST_CASE("csv round trip preserves values, mask and schema") {
  RngStream rng(11);
  auto table = generate_dgm(50, rng);
  // knock out an assortment of cells
  for (std::size_t r = 0; r < table.n_rows(); r += 3) {
    table.set_missing(r, (r / 3) % 7);
  }
  const auto text = to_csv(table);
  const auto back = from_csv_text(text, table.schema());
  REQUIRE(back.n_rows() == table.n_rows());
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      CHECK(back.missing(r, c) == table.missing(r, c));
      if (table.observed(r, c)) {
        CHECK(back.cell(r, c) == table.cell(r, c));  // 17 digits: bit-exact
      }
    }
  }
}

TEST_CASE("masked cells serialise as NA in exactly the masked positions") {
  auto table = example_table();
  table.set_missing(0, 2);
  const auto text = to_csv(table);
  CHECK(text.find("-0.29999999999999999,0,NA,0") != std::string::npos);
}

TEST_CASE("empty table writes a header-only file") {
  const LongitudinalTable table(dgm_schema(), 0);
  CHECK(to_csv(table) == "L0,A0,L1,A1,L2,A2,Y\n");
}

TEST_CASE("file io round trip") {
  testing_support::TempDir dir;
  const auto path = dir.path("roundtrip.csv");
  const auto table = example_table();
  write_csv(table, path);
  const auto back = load_csv(path, table.schema());
  CHECK(back.n_rows() == table.n_rows());
  CHECK(back.cell(3, 6) == table.cell(3, 6));
  CHECK_THROWS_AS(load_csv(dir.path("does_not_exist.csv"), table.schema()), Error);
}

TEST_CASE("schema validation") {
  // no outcome
  CHECK_THROWS_AS(Schema({{"L0", ColumnKind::continuous, ColumnRole::baseline_confounder, 0}}),
                  Error);
  // outcome not last
  CHECK_THROWS_AS(Schema({{"Y", ColumnKind::continuous, ColumnRole::outcome, 0},
                          {"L0", ColumnKind::continuous, ColumnRole::baseline_confounder, 1}}),
                  Error);
  // duplicate names
  CHECK_THROWS_AS(Schema({{"L0", ColumnKind::continuous, ColumnRole::baseline_confounder, 0},
                          {"L0", ColumnKind::continuous, ColumnRole::outcome, 1}}),
                  Error);
  // time order must be non-decreasing
  CHECK_THROWS_AS(Schema({{"L1", ColumnKind::continuous, ColumnRole::timevarying_confounder, 1},
                          {"L0", ColumnKind::continuous, ColumnRole::baseline_confounder, 0},
                          {"Y", ColumnKind::continuous, ColumnRole::outcome, 2}}),
                  Error);
}
