#pragma once

#include <stdexcept>
#include <string>

namespace lenatten {

// Base of every error raised by the library. The category decides the CLI
// exit code: usage/config problems exit 1, data problems 2, numeric 3.
class Error : public std::runtime_error {
 public:
  enum class Category { usage, data, numeric };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(Category::usage, "shape error: " + what) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& what) : Error(Category::data, "index error: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(Category::usage, "config error: " + what) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& what)
      : Error(Category::usage, "contract error: " + what) {}
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(Category::data, "input error: " + what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(Category::data, "parse error: " + what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(Category::data, "validation error: " + what) {}
};

struct AlignmentError : Error {
  explicit AlignmentError(const std::string& what)
      : Error(Category::data, "alignment error: " + what) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& what)
      : Error(Category::data, "checkpoint error: " + what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(Category::numeric, "numeric error: " + what) {}
};

}  // namespace lenatten
