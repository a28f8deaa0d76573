// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zerosmooth {

/// Base class for every error raised by the library. `error_class()` is a
/// stable, machine-parsable identifier used by the CLI on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string_view error_class, const std::string& message)
      : std::runtime_error(message), error_class_(error_class) {}

  const std::string& error_class() const noexcept { return error_class_; }

 private:
  std::string error_class_;
};

#define ZEROSMOOTH_DEFINE_ERROR(Name, tag)                                 \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(tag, message) {}     \
  }

ZEROSMOOTH_DEFINE_ERROR(DimensionError, "dimension");
ZEROSMOOTH_DEFINE_ERROR(RankError, "rank");
ZEROSMOOTH_DEFINE_ERROR(RangeError, "range");
ZEROSMOOTH_DEFINE_ERROR(IndexError, "index");
ZEROSMOOTH_DEFINE_ERROR(ConfigError, "config");
ZEROSMOOTH_DEFINE_ERROR(UnsupportedVariantError, "unsupported-variant");
ZEROSMOOTH_DEFINE_ERROR(ScheduleError, "schedule");
ZEROSMOOTH_DEFINE_ERROR(OrderingError, "ordering");
ZEROSMOOTH_DEFINE_ERROR(PlanError, "plan");
ZEROSMOOTH_DEFINE_ERROR(CacheMissError, "cache-miss");
ZEROSMOOTH_DEFINE_ERROR(TrainingError, "training");
ZEROSMOOTH_DEFINE_ERROR(FormatError, "format");
ZEROSMOOTH_DEFINE_ERROR(IoError, "io");
ZEROSMOOTH_DEFINE_ERROR(NonFiniteError, "non-finite");

#undef ZEROSMOOTH_DEFINE_ERROR

}  // namespace zerosmooth
