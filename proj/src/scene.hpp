// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic scenes: the symbolic stand-in for an input image, the frozen
// featurizer that turns a scene into vision tokens, the caption grammar, the
// symbolic truth evaluator, and compositional hard negatives.

#pragma once

#include "tensor.hpp"
#include "tokenizer.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace disclvlm {

inline constexpr std::array<std::string_view, 8> kShapeNames = {
    "cube", "ball", "cone", "cylinder", "ring", "star", "pyramid", "disk"};
inline constexpr std::array<std::string_view, 8> kColorNames = {
    "red", "blue", "green", "yellow", "purple", "orange", "white", "black"};
inline constexpr std::array<std::string_view, 3> kSizeNames = {"small", "medium", "large"};
inline constexpr std::array<std::string_view, 4> kOrdinalNames = {"first", "second", "third",
                                                                  "fourth"};
inline constexpr std::array<std::string_view, 4> kCountNames = {"one", "two", "three", "four"};

inline constexpr int kGridRows = 2;
inline constexpr int kGridCols = 4;
inline constexpr int kGridCells = kGridRows * kGridCols;
inline constexpr int kMaxObjects = 4;

enum class Predicate { kLeftOf, kRightOf, kAbove, kBelow };

std::string_view predicate_name(Predicate p);  // "left-of", ...
Predicate parse_predicate(std::string_view name);
Predicate inverse(Predicate p);
std::vector<std::string> predicate_words(Predicate p);  // {"left","of"}, {"above"}

struct Cell {
    int row = 0;
    int col = 0;
    bool operator==(const Cell&) const = default;
};

struct SceneObject {
    int shape = 0;
    int color = 0;
    int size = 0;
    Cell cell;
    bool operator==(const SceneObject&) const = default;
};

struct Relation {
    int subject = 0;
    Predicate predicate = Predicate::kLeftOf;
    int object = 0;
    bool operator==(const Relation&) const = default;
};

struct Scene {
    std::vector<SceneObject> objects;
    std::vector<Relation> relations;
    std::uint64_t seed = 0;
    bool operator==(const Scene&) const = default;
};

// Geometric truth of "a <predicate> b".
bool holds(Predicate p, const Cell& a, const Cell& b);

// The predicate used when describing a pair: horizontal when the columns
// differ, vertical otherwise.
Predicate describe_relation(const Cell& subject, const Cell& object);

Scene generate_scene(std::uint64_t seed);
void validate_scene(const Scene& scene);  // throws kContract

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

// Frozen featurizer: per-cell feature = table(shape) + table(color) +
// table(size) + positional code, or an "empty" code plus position for free
// cells. Tables are drawn once from the featurizer seed.
class SceneFeaturizer {
public:
    explicit SceneFeaturizer(int feature_dim, std::uint64_t featurizer_seed = kDefaultSeed);

    static constexpr std::uint64_t kDefaultSeed = 0x5CE7E5EEDULL;

    Mat<float> featurize(const Scene& scene) const;  // [kGridCells x feature_dim]
    int feature_dim() const { return feature_dim_; }

private:
    int feature_dim_;
    Mat<float> shape_table_;
    Mat<float> color_table_;
    Mat<float> size_table_;
    Mat<float> position_table_;
    Mat<float> empty_code_;
};

struct CaptionPair {
    std::string short_text;
    std::string long_text;
    std::vector<TokenId> short_tokens;
    std::vector<TokenId> long_tokens;
};

inline constexpr std::size_t kShortCaptionMaxTokens = 30;  // exclusive bound
inline constexpr std::size_t kLongCaptionMinTokens = 30;
inline constexpr std::size_t kLongCaptionMaxTokens = 120;

// Salient objects: largest size first, ties by lowest index.
std::vector<int> salient_objects(const Scene& scene, std::size_t count);

CaptionPair caption(const Scene& scene);

// Jaccard overlap of the word sets of two captions.
double word_jaccard(const std::vector<TokenId>& a, const std::vector<TokenId>& b);

// --- compositional captions -------------------------------------------------

// "a [size] color shape"; size < 0 means unspecified.
struct NounPhrase {
    int size = -1;
    int color = 0;
    int shape = 0;
    bool numeral = false;  // "one" instead of "a"
    bool operator==(const NounPhrase&) const = default;
};

// NP [predicate NP] ["and" NP]
struct CompositionalCaption {
    NounPhrase first;
    std::optional<Predicate> predicate;
    std::optional<NounPhrase> second;
    std::optional<NounPhrase> extra;
    bool operator==(const CompositionalCaption&) const = default;
};

std::string render(const CompositionalCaption& c);
CompositionalCaption parse_compositional(std::string_view text);  // throws kTemplate

// Symbolic evaluator: exists an injective assignment of noun phrases to scene
// objects with matching attributes such that the predicate holds.
bool is_true_of(const CompositionalCaption& c, const Scene& scene);
bool is_true_of(std::string_view text, const Scene& scene);

CompositionalCaption short_caption_structure(const Scene& scene);

enum class NegativeCategory {
    kReplaceObject,
    kReplaceAttribute,
    kReplaceRelation,
    kSwapObject,
    kSwapAttribute,
    kAddObject,
    kAddAttribute,
};

inline constexpr std::array<NegativeCategory, 7> kAllCategories = {
    NegativeCategory::kReplaceObject,  NegativeCategory::kReplaceAttribute,
    NegativeCategory::kReplaceRelation, NegativeCategory::kSwapObject,
    NegativeCategory::kSwapAttribute,  NegativeCategory::kAddObject,
    NegativeCategory::kAddAttribute};

std::string_view category_name(NegativeCategory c);
NegativeCategory parse_category(std::string_view name);  // throws kParameter
// "replace", "swap" or "add".
std::string_view category_group(NegativeCategory c);

struct HardNegative {
    NegativeCategory category;
    std::string positive;
    std::string negative;
};

struct NegativeSet {
    std::vector<HardNegative> negatives;
    std::vector<NegativeCategory> skipped;
};

NegativeSet make_negatives(const Scene& scene, const CompositionalCaption& positive);

// Grammar paraphrase that keeps the caption true: clause reordering with the
// inverse predicate for two-object captions, "a" -> "one" otherwise.
CompositionalCaption paraphrase(const CompositionalCaption& c);

// --- dataset file -------------------------------------------------------------

struct DatasetRecord {
    Scene scene;
    CaptionPair captions;
    NegativeSet negatives;
};

DatasetRecord make_record(std::uint64_t scene_seed);

// Seed of the i-th scene of a split; train and held-out ranges never overlap.
std::uint64_t scene_seed(std::uint64_t global_seed, std::uint64_t index, bool heldout);

nlohmann::json record_to_json(const DatasetRecord& r);
DatasetRecord record_from_json(const nlohmann::json& j);

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::string& path);

}  // namespace disclvlm
