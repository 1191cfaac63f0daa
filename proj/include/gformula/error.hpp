#pragma once

#include <stdexcept>
#include <string>

namespace gformula {

enum class ErrorKind { validation, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  static Error validation(const std::string& what) { return {ErrorKind::validation, what}; }
  static Error numeric(const std::string& what) { return {ErrorKind::numeric, what}; }
  static Error io(const std::string& what) { return {ErrorKind::io, what}; }

 private:
  ErrorKind kind_;
};

}  // namespace gformula
