// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "error.hpp"

namespace disclvlm {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kLength: return "length";
        case ErrorCode::kNumeric: return "numeric";
        case ErrorCode::kTemplate: return "template";
        case ErrorCode::kShape: return "shape";
        case ErrorCode::kVocabulary: return "vocabulary";
        case ErrorCode::kParameter: return "parameter";
        case ErrorCode::kContract: return "contract";
        case ErrorCode::kDegenerate: return "degenerate-input";
        case ErrorCode::kIo: return "io";
        case ErrorCode::kConfig: return "config";
        case ErrorCode::kMissingDependency: return "missing-dependency";
        case ErrorCode::kDivergence: return "divergence";
        case ErrorCode::kInternal: return "internal";
    }
    return "unknown";
}

}  // namespace disclvlm
