// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mcr {

/// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Domain errors: the inputs are well-formed files/values but violate an
// operation's contract.
struct EmptyMaskError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };
struct InvalidRangeError : Error { using Error::Error; };
struct TimestepOutOfRangeError : Error { using Error::Error; };
struct StepCountInvalidError : Error { using Error::Error; };
struct GenerationFailedError : Error { using Error::Error; };
struct TooSmallError : Error { using Error::Error; };
struct CacheMismatchError : Error { using Error::Error; };
struct EmptyBatchError : Error { using Error::Error; };

// I/O and file-content errors.
struct IoError : Error { using Error::Error; };
struct MalformedFileError : Error { using Error::Error; };
struct CorruptCheckpointError : Error { using Error::Error; };

// Configuration errors (bad keys, bad values, unusable flag combinations).
struct ConfigError : Error { using Error::Error; };

}  // namespace mcr
