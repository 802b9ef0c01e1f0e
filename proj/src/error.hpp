// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace disclvlm {

// Mirrors dl_status in the public C header; keep the numbering in sync.
enum class ErrorCode : int {
    kLength = 1,
    kNumeric = 2,
    kTemplate = 3,
    kShape = 4,
    kVocabulary = 5,
    kParameter = 6,
    kContract = 7,
    kDegenerate = 8,
    kIo = 9,
    kConfig = 10,
    kMissingDependency = 11,
    kDivergence = 12,
    kInternal = 13,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace disclvlm
