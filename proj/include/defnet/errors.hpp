#pragma once

#include <stdexcept>
#include <string>

namespace defnet {

/// Base class for every error raised by the folding pipeline.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DEFNET_DECLARE_ERROR(Name)      \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

DEFNET_DECLARE_ERROR(InvalidCloth);
DEFNET_DECLARE_ERROR(InvalidAction);
DEFNET_DECLARE_ERROR(ShapeMismatch);
DEFNET_DECLARE_ERROR(InvalidTier);
DEFNET_DECLARE_ERROR(PerturbTooLarge);
DEFNET_DECLARE_ERROR(EmptyDataset);
DEFNET_DECLARE_ERROR(EmptyBank);
DEFNET_DECLARE_ERROR(UnsupportedVariant);
DEFNET_DECLARE_ERROR(InsufficientPairs);
DEFNET_DECLARE_ERROR(EpsilonTooLarge);
DEFNET_DECLARE_ERROR(NoPath);
DEFNET_DECLARE_ERROR(InvalidPick);
DEFNET_DECLARE_ERROR(EmptyFlow);
DEFNET_DECLARE_ERROR(ArtifactMissing);

#undef DEFNET_DECLARE_ERROR

/// Malformed or incompatible artifact file. Carries the offending line.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")"
                        : what),
        line_(line) {}

  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace defnet
