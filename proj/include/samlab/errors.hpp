#pragma once

#include <stdexcept>
#include <string>

namespace samlab {

/// Shapes of operands do not conform.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

/// Layer normalization over fewer than two units.
class DegenerateNormalizationError : public ContractError {
 public:
  explicit DegenerateNormalizationError(const std::string& what) : ContractError(what) {}
};

/// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A figure was requested from runs that lack the analysis it needs.
class MissingAnalysisError : public std::runtime_error {
 public:
  MissingAnalysisError(const std::string& figure, const std::string& analysis)
      : std::runtime_error("figure " + figure + " needs analysis '" + analysis +
                           "' (enable it with analyses=" + analysis + ")"),
        analysis_(analysis) {}

  const std::string& analysis() const noexcept { return analysis_; }

 private:
  std::string analysis_;
};

}  // namespace samlab
