#pragma once

#include <stdexcept>
#include <string>

namespace lrp2 {

// Root of every error raised by the toolkit. The CLI maps ConfigError and
// UsageError to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LRP2_DECLARE_ERROR(Name, Base) \
  class Name : public Base {           \
   public:                             \
    using Base::Base;                  \
  }

LRP2_DECLARE_ERROR(ConfigError, Error);
LRP2_DECLARE_ERROR(UsageError, ConfigError);
LRP2_DECLARE_ERROR(FormatError, Error);
LRP2_DECLARE_ERROR(IntegrityError, Error);
LRP2_DECLARE_ERROR(InputError, Error);
LRP2_DECLARE_ERROR(SpecError, Error);
LRP2_DECLARE_ERROR(DivergenceError, Error);
LRP2_DECLARE_ERROR(ScoringError, Error);
LRP2_DECLARE_ERROR(NumericError, Error);
LRP2_DECLARE_ERROR(ValidationError, Error);
LRP2_DECLARE_ERROR(AlignmentError, Error);
LRP2_DECLARE_ERROR(VersionError, Error);
LRP2_DECLARE_ERROR(ReportError, Error);

#undef LRP2_DECLARE_ERROR

}  // namespace lrp2
