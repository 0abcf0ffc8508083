#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace facedub {

// Root of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FACEDUB_DEFINE_ERROR(Name)      \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

FACEDUB_DEFINE_ERROR(DegenerateHull)
FACEDUB_DEFINE_ERROR(DegenerateCrop)
FACEDUB_DEFINE_ERROR(InvalidParameter)
FACEDUB_DEFINE_ERROR(ShapeError)
FACEDUB_DEFINE_ERROR(FormatError)
FACEDUB_DEFINE_ERROR(InsufficientFrames)
FACEDUB_DEFINE_ERROR(NumericalError)
FACEDUB_DEFINE_ERROR(ContractError)
FACEDUB_DEFINE_ERROR(LengthMismatch)
FACEDUB_DEFINE_ERROR(TrainingDivergence)

#undef FACEDUB_DEFINE_ERROR

// A training loss went NaN/Inf. Carries the last checkpoint written before the
// failure (empty if none was written yet).
class NonFiniteLoss : public NumericalError {
 public:
  NonFiniteLoss(const std::string& what, std::string last_good_checkpoint)
      : NumericalError(what), last_good_checkpoint_(std::move(last_good_checkpoint)) {}

  const std::string& last_good_checkpoint() const noexcept { return last_good_checkpoint_; }

 private:
  std::string last_good_checkpoint_;
};

}  // namespace facedub
