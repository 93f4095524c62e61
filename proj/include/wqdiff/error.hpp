#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wqdiff {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or malformed input. The CLI maps these to exit code 2.
class InputError : public Error {
public:
  using Error::Error;
};

/// Numerical failure during a computation (exit code 3).
class NumericError : public Error {
public:
  using Error::Error;
};

/// Checkpoint / split / data hashes disagree (exit code 4).
class IntegrityError : public Error {
public:
  using Error::Error;
};

#define WQDIFF_DEFINE_ERROR(Name, Base)                                        \
  class Name : public Base {                                                   \
  public:                                                                      \
    explicit Name(const std::string& what) : Base(#Name ": " + what) {}        \
  }

WQDIFF_DEFINE_ERROR(ConfigError, InputError);
WQDIFF_DEFINE_ERROR(GridMismatch, InputError);
WQDIFF_DEFINE_ERROR(NonPositiveIrradiance, InputError);
WQDIFF_DEFINE_ERROR(InsufficientCoverage, InputError);
WQDIFF_DEFINE_ERROR(GeometryOutOfRange, InputError);
WQDIFF_DEFINE_ERROR(InsufficientLabSamples, InputError);
WQDIFF_DEFINE_ERROR(UnmatchableLabSample, InputError);
WQDIFF_DEFINE_ERROR(TooFewSamples, InputError);
WQDIFF_DEFINE_ERROR(NonMonotonicTimestamps, InputError);
WQDIFF_DEFINE_ERROR(EncoderNotFitted, InputError);
WQDIFF_DEFINE_ERROR(RankDeficient, InputError);
WQDIFF_DEFINE_ERROR(StepOutOfRange, InputError);
WQDIFF_DEFINE_ERROR(LengthMismatch, InputError);
WQDIFF_DEFINE_ERROR(ConstantTruth, InputError);
WQDIFF_DEFINE_ERROR(TooFewPoints, InputError);
WQDIFF_DEFINE_ERROR(DivergenceDetected, NumericError);

#undef WQDIFF_DEFINE_ERROR

/// Malformed row in an input file. `row()` is 1-based and counts the header.
class SchemaError : public InputError {
public:
  SchemaError(std::size_t row, const std::string& what)
      : InputError("SchemaError: row " + std::to_string(row) + ": " + what),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

private:
  std::size_t row_;
};

}  // namespace wqdiff
