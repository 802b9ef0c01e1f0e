// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokenizer.hpp"

#include "error.hpp"
#include "scene.hpp"


namespace disclvlm {

namespace {

constexpr std::array<std::string_view, special::kCount> kSpecialRenderings = {
    "<pad>", "<bos>", "<eos>", "<image>", "<out_token>", "USER:", "ASSISTANT:"};

constexpr std::string_view kGrammarWords[] = {
    "a",     "the",   "and",     "of",    "is",     "are",   "there", "in",     "this",
    "image", "object", "objects", "left", "right",  "above", "below", "nothing", "else",
    "row",   "column", "top",    "bottom", ".",
};

// Prompt vocabulary: the hand-written summary prompts and the detail
// instruction of the image template.
constexpr std::string_view kPromptWords[] = {
    "summarize", "describe", "represent", "caption", "provided", "text", "word",
    "words",     "few",      "briefly",   "detail",  ":",
};

}  // namespace

Tokenizer::Tokenizer() {
    auto add = [this](std::string_view w) {
        const std::string word(w);
        if (index_.count(word) != 0) {
            return;
        }
        index_.emplace(word, static_cast<TokenId>(words_.size()));
        words_.push_back(word);
    };
    for (const auto w : kSpecialRenderings) {
        words_.emplace_back(w);
    }
    for (const auto w : kGrammarWords) add(w);
    for (const auto w : kCountNames) add(w);
    for (const auto w : kOrdinalNames) add(w);
    for (const auto w : kSizeNames) add(w);
    for (const auto w : kColorNames) add(w);
    for (const auto w : kShapeNames) add(w);
    for (const auto w : kPromptWords) add(w);
}

const Tokenizer& Tokenizer::instance() {
    static const Tokenizer tokenizer;
    return tokenizer;
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
    std::vector<TokenId> ids;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') {
            ++pos;
        }
        if (pos >= text.size()) {
            break;
        }
        const std::size_t end = text.find(' ', pos);
        const std::string_view word =
            text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        ids.push_back(id(word));
        pos = end == std::string_view::npos ? text.size() : end;
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<TokenId>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += word(ids[i]);
    }
    return out;
}

TokenId Tokenizer::id(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) {
        fail(ErrorCode::kVocabulary, "out-of-vocabulary word '" + std::string(word) + "'");
    }
    return it->second;
}

const std::string& Tokenizer::word(TokenId id) const {
    require(id >= 0 && id < vocab_size(), ErrorCode::kVocabulary,
            "token id " + std::to_string(id) + " outside vocabulary");
    return words_[static_cast<std::size_t>(id)];
}

}  // namespace disclvlm
