#pragma once

#include <stdexcept>
#include <string>

namespace essnl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ESS codec
class EmptyCodebookError : public Error { using Error::Error; };
class InfeasibleRateError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class InvalidSequenceError : public Error { using Error::Error; };
class PrecisionError : public Error { using Error::Error; };

// Mapper, fiber and receiver chain
class ConfigurationError : public Error { using Error::Error; };
class AliasingError : public Error { using Error::Error; };
class StepSizeError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class DegenerateEstimateError : public Error { using Error::Error; };

/// Wraps a failure with the name of the pipeline stage that raised it.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

  private:
    std::string stage_;
};

}  // namespace essnl
