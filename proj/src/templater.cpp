// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "templater.hpp"

#include "error.hpp"

#include <algorithm>
#include <sstream>

namespace disclvlm {

std::string_view segment_name(Segment s) {
    switch (s) {
        case Segment::kRole: return "role";
        case Segment::kPrompt: return "prompt";
        case Segment::kVision: return "vision";
        case Segment::kOut: return "out";
        case Segment::kInstruction: return "instruction";
        case Segment::kCaption: return "caption";
    }
    return "";
}

PromptPair make_prompt_pair(std::string_view image_prompt, std::string_view text_prompt) {
    const auto& tok = Tokenizer::instance();
    PromptPair p{tok.tokenize(image_prompt), tok.tokenize(text_prompt)};
    require(!p.image.empty() && !p.text.empty(), ErrorCode::kParameter, "prompts must be non-empty");
    return p;
}

PromptPair default_prompts() {
    return make_prompt_pair(kDefaultImagePrompt, kDefaultTextPrompt);
}

namespace {

class RowBuilder {
public:
    explicit RowBuilder(Modality m) { row_.modality = m; }

    void push(TokenId id, Segment s, bool ar = false) {
        row_.tokens.push_back(id);
        row_.segments.push_back(s);
        row_.ar_mask.push_back(ar ? 1 : 0);
        if (id == special::kOut) {
            row_.out_positions.push_back(position() - 1);
            if (row_.anchor < 0) row_.anchor = position() - 1;
        }
    }

    Span push_span(std::span<const TokenId> ids, Segment s, bool ar = false) {
        Span span{position(), 0};
        for (const auto id : ids) push(id, s, ar);
        span.end = position();
        return span;
    }

    int position() const { return static_cast<int>(row_.tokens.size()); }
    TemplateRow& row() { return row_; }

private:
    TemplateRow row_;
};

void check_length(const TemplateRow& row, const TemplateOptions& options) {
    require(row.length() <= options.max_seq_len, ErrorCode::kLength,
            "templated row of " + std::to_string(row.length()) + " tokens exceeds max_seq_len " +
                std::to_string(options.max_seq_len));
}

}  // namespace

TemplateRow build_image_row(int features_index, std::span<const TokenId> long_caption,
                            const TemplateOptions& options) {
    const bool training = options.mode == TemplateMode::kTraining;
    require(!training || !long_caption.empty(), ErrorCode::kTemplate,
            "training image rows need a non-empty long caption");
    RowBuilder b(Modality::kImage);
    b.push(special::kUser, Segment::kRole);
    b.row().prompt = b.push_span(options.prompts.image, Segment::kPrompt);
    const std::vector<TokenId> slots(static_cast<std::size_t>(options.num_vision_tokens), special::kImage);
    b.row().vision = b.push_span(slots, Segment::kVision);
    b.push(special::kAssistant, Segment::kRole);
    b.push(special::kOut, Segment::kOut);
    if (training) {
        b.push(special::kUser, Segment::kRole);
        b.push_span(Tokenizer::instance().tokenize(kDetailInstruction), Segment::kInstruction);
        b.push(special::kAssistant, Segment::kRole);
        b.row().caption = b.push_span(long_caption, Segment::kCaption, true);
        b.push(special::kOut, Segment::kOut);
    }
    TemplateRow row = std::move(b.row());
    row.soft_prompt = options.soft_image_prompt;
    row.features = features_index;
    check_length(row, options);
    return row;
}

TemplateRow build_text_row(std::span<const TokenId> short_caption, const TemplateOptions& options) {
    require(!short_caption.empty() &&
                (options.long_text_rows || short_caption.size() < kShortCaptionMaxTokens),
            ErrorCode::kContract, "text rows take a non-empty caption shorter than 30 tokens");
    RowBuilder b(Modality::kText);
    b.push(special::kUser, Segment::kRole);
    b.row().prompt = b.push_span(options.prompts.text, Segment::kPrompt);
    b.row().caption = b.push_span(short_caption, Segment::kCaption);
    b.push(special::kAssistant, Segment::kRole);
    b.push(special::kOut, Segment::kOut);
    TemplateRow row = std::move(b.row());
    row.soft_prompt = options.soft_text_prompt;
    check_length(row, options);
    return row;
}

int AssembledBatch::max_length() const {
    int m = 0;
    for (const auto& r : rows) m = std::max(m, r.length());
    return m;
}

int AssembledBatch::total_tokens() const {
    int n = 0;
    for (const auto& r : rows) n += r.length();
    return n;
}

std::vector<std::vector<TokenId>> AssembledBatch::padded_tokens() const {
    const int width = max_length();
    std::vector<std::vector<TokenId>> out;
    for (const auto& r : rows) {
        auto ids = r.tokens;
        ids.resize(static_cast<std::size_t>(width), special::kPad);
        out.push_back(std::move(ids));
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> AssembledBatch::attention_mask() const {
    const int width = max_length();
    std::vector<std::vector<std::uint8_t>> out;
    for (const auto& r : rows) {
        std::vector<std::uint8_t> m(static_cast<std::size_t>(width), 0);
        std::fill(m.begin(), m.begin() + r.length(), 1);
        out.push_back(std::move(m));
    }
    return out;
}

std::string AssembledBatch::dump() const {
    const auto& tok = Tokenizer::instance();
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        out << "# row " << r << " modality=" << modality_name(row.modality)
            << " source=" << row.source << " length=" << row.length() << " anchor=" << row.anchor
            << (row.soft_prompt ? " soft-prompt" : "") << '\n';
        for (int i = 0; i < row.length(); ++i) {
            const auto s = static_cast<std::size_t>(i);
            out << i << " | " << tok.word(row.tokens[s]) << " | " << segment_name(row.segments[s])
                << " | ar=" << static_cast<int>(row.ar_mask[s]) << (i == row.anchor ? " anchor" : "")
                << '\n';
        }
    }
    return out.str();
}

AssembledBatch collate(std::span<const CollateItem> items, const SceneFeaturizer& featurizer,
                       const TemplateOptions& options) {
    require(!items.empty(), ErrorCode::kParameter, "collate needs at least one pair");
    AssembledBatch batch;
    for (const auto& item : items) {
        require(item.scene != nullptr && item.captions != nullptr, ErrorCode::kParameter,
                "collate item without scene or captions");
        TemplateOptions o = options;
        std::span<const TokenId> long_caption;
        if (options.mode == TemplateMode::kTraining && item.with_long) {
            long_caption = item.captions->long_tokens;
        } else {
            o.mode = TemplateMode::kInference;
        }
        batch.features.push_back(featurizer.featurize(*item.scene));
        TemplateRow row =
            build_image_row(static_cast<int>(batch.features.size()) - 1, long_caption, o);
        row.source = item.scene->seed;
        batch.rows.push_back(std::move(row));
    }
    for (const auto& item : items) {
        TemplateRow row = build_text_row(
            options.long_text_rows ? item.captions->long_tokens : item.captions->short_tokens, options);
        row.source = item.scene->seed;
        batch.rows.push_back(std::move(row));
    }
    return batch;
}

AssembledBatch image_batch(std::span<const Scene> scenes, const SceneFeaturizer& featurizer,
                           const TemplateOptions& options) {
    AssembledBatch batch;
    TemplateOptions o = options;
    o.mode = TemplateMode::kInference;
    for (const auto& s : scenes) {
        batch.features.push_back(featurizer.featurize(s));
        TemplateRow row = build_image_row(static_cast<int>(batch.features.size()) - 1, {}, o);
        row.source = s.seed;
        batch.rows.push_back(std::move(row));
    }
    return batch;
}

AssembledBatch text_batch(std::span<const std::vector<TokenId>> captions,
                          const TemplateOptions& options) {
    AssembledBatch batch;
    for (const auto& c : captions) {
        batch.rows.push_back(build_text_row(c, options));
    }
    return batch;
}

}  // namespace disclvlm
