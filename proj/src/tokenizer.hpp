// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace disclvlm {

using TokenId = int;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kImage = 3;
inline constexpr TokenId kOut = 4;
inline constexpr TokenId kUser = 5;
inline constexpr TokenId kAssistant = 6;
inline constexpr int kCount = 7;
}  // namespace special

// Whitespace tokenizer over the closed grammar vocabulary. Special tokens
// have printable renderings but are never produced by tokenize().
class Tokenizer {
public:
    Tokenizer();

    static const Tokenizer& instance();

    std::vector<TokenId> tokenize(std::string_view text) const;
    std::string detokenize(const std::vector<TokenId>& ids) const;

    TokenId id(std::string_view word) const;
    const std::string& word(TokenId id) const;
    bool is_special(TokenId id) const { return id >= 0 && id < special::kCount; }
    int vocab_size() const { return static_cast<int>(words_.size()); }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace disclvlm
