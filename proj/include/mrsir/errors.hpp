#pragma once

#include <stdexcept>
#include <string>

namespace mrsir {

// Broad failure categories, used by the CLI to pick an exit code:
// invalid input/configuration -> 2, missing or unreadable artifacts -> 3,
// numerical failure -> 4.
enum class ErrorKind { config, artifacts, numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

#define MRSIR_DEFINE_ERROR(NAME, KIND)                                        \
  class NAME : public Error {                                                 \
  public:                                                                     \
    explicit NAME(const std::string& what = #NAME)                            \
        : Error(ErrorKind::KIND, what) {}                                     \
  }

MRSIR_DEFINE_ERROR(InvalidSpec, config);
MRSIR_DEFINE_ERROR(InvalidConfig, config);
MRSIR_DEFINE_ERROR(InvalidDims, config);
MRSIR_DEFINE_ERROR(DimMismatch, config);
MRSIR_DEFINE_ERROR(ShapeMismatch, config);
MRSIR_DEFINE_ERROR(DimNotDivisible, config);
MRSIR_DEFINE_ERROR(CheckpointMismatch, config);
MRSIR_DEFINE_ERROR(DataEmpty, config);
MRSIR_DEFINE_ERROR(EmptyBrainMask, config);
MRSIR_DEFINE_ERROR(BudgetTooSmall, config);
MRSIR_DEFINE_ERROR(DegenerateRange, config);
MRSIR_DEFINE_ERROR(NoValidVoxels, config);

MRSIR_DEFINE_ERROR(IoFailure, artifacts);
MRSIR_DEFINE_ERROR(MalformedHeader, artifacts);
MRSIR_DEFINE_ERROR(UnsupportedDatatype, artifacts);
MRSIR_DEFINE_ERROR(TruncatedData, artifacts);
MRSIR_DEFINE_ERROR(MissingArtifacts, artifacts);

MRSIR_DEFINE_ERROR(NonConvergence, numeric);
MRSIR_DEFINE_ERROR(NonFiniteActivation, numeric);
MRSIR_DEFINE_ERROR(DivergedLoss, numeric);
MRSIR_DEFINE_ERROR(NotInTrainingMode, numeric);

#undef MRSIR_DEFINE_ERROR

inline int exit_code_for(const Error& e) {
  switch (e.kind()) {
  case ErrorKind::config: return 2;
  case ErrorKind::artifacts: return 3;
  case ErrorKind::numeric: return 4;
  }
  return 1;
}

} // namespace mrsir
