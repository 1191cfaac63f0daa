#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "gformula/simstudy.hpp"
#include "gformula/table.hpp"

namespace testing_support {

// Three-period example block: five fully observed individuals.
inline const char* example_csv() {
  return
      "L0,A0,L1,A1,L2,A2,Y\n"
      "-0.3,0,0.5,0,2.2,1,1.3\n"
      "2.3,1,4.2,1,4.6,1,5.5\n"
      "-0.5,1,0.4,0,0.8,1,1.9\n"
      "-0.1,0,1.6,1,4.1,0,7.0\n"
      "0.4,1,1.9,1,3.5,1,6.2\n";
}

inline gformula::LongitudinalTable example_table() {
  return gformula::from_csv_text(example_csv(), gformula::dgm_schema());
}

class TempDir {
 public:
  TempDir() {
    base_ = std::filesystem::temp_directory_path() /
            ("gformula_test_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  std::string path(const std::string& name) const { return (base_ / name).string(); }

 private:
  std::filesystem::path base_;
};

}  // namespace testing_support
