// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace matmvp {

// Error taxonomy; the CLI maps each type to a distinct exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgumentError : Error {
    using Error::Error;
};

struct DataIntegrityError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct TrainingDivergenceError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct UndefinedScoreError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgumentError(msg);
}

}  // namespace matmvp
