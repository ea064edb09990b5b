#pragma once

#include <stdexcept>
#include <string>

namespace tgeacm {

// Exit-code class used by the C API: validation problems are the caller's
// fault (bad config, bad files), runtime problems are ours or numerical.
enum class ErrorClass { Validation, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorClass::Validation, "config error: " + w) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorClass::Validation, "format error: " + w) {}
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& w) : Error(ErrorClass::Validation, "invalid input: " + w) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorClass::Runtime, "shape error: " + w) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorClass::Runtime, "integrity error: " + w) {}
};

struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& w) : Error(ErrorClass::Validation, "undefined metric: " + w) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error(ErrorClass::Runtime, "divergence: " + w) {}
};

}  // namespace tgeacm
