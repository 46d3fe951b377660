// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace e2t {

/// Base of every error raised by the library. `kind()` is the short
/// category name printed by the CLI ("FormatError", "SubjectError", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define E2T_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

E2T_DEFINE_ERROR(FormatError);
E2T_DEFINE_ERROR(IoError);
E2T_DEFINE_ERROR(IntegrityError);
E2T_DEFINE_ERROR(DataError);
E2T_DEFINE_ERROR(SplitError);
E2T_DEFINE_ERROR(SubjectError);
E2T_DEFINE_ERROR(LengthError);
E2T_DEFINE_ERROR(VocabError);
E2T_DEFINE_ERROR(ShapeError);
E2T_DEFINE_ERROR(LossError);
E2T_DEFINE_ERROR(AlignError);
E2T_DEFINE_ERROR(NumericsError);
E2T_DEFINE_ERROR(MetricError);
E2T_DEFINE_ERROR(ConfigError);

#undef E2T_DEFINE_ERROR

}  // namespace e2t
