// Copyright 2026 The disclvlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "scene.hpp"

#include "error.hpp"
#include "rng.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace disclvlm {

namespace {

template <std::size_t N>
int index_of(const std::array<std::string_view, N>& names, std::string_view name,
             const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == name) {
            return static_cast<int>(i);
        }
    }
    fail(ErrorCode::kParameter, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) {
        words.push_back(w);
    }
    return words;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) out += ' ';
        out += words[i];
    }
    return out;
}

NounPhrase phrase_for(const SceneObject& o, bool with_size) {
    NounPhrase np;
    np.size = with_size ? o.size : -1;
    np.color = o.color;
    np.shape = o.shape;
    return np;
}

bool matches(const NounPhrase& np, const SceneObject& o) {
    return np.shape == o.shape && np.color == o.color && (np.size < 0 || np.size == o.size);
}

}  // namespace

std::string_view predicate_name(Predicate p) {
    switch (p) {
        case Predicate::kLeftOf: return "left-of";
        case Predicate::kRightOf: return "right-of";
        case Predicate::kAbove: return "above";
        case Predicate::kBelow: return "below";
    }
    return "left-of";
}

Predicate parse_predicate(std::string_view name) {
    if (name == "left-of") return Predicate::kLeftOf;
    if (name == "right-of") return Predicate::kRightOf;
    if (name == "above") return Predicate::kAbove;
    if (name == "below") return Predicate::kBelow;
    fail(ErrorCode::kParameter, "unknown predicate '" + std::string(name) + "'");
}

Predicate inverse(Predicate p) {
    switch (p) {
        case Predicate::kLeftOf: return Predicate::kRightOf;
        case Predicate::kRightOf: return Predicate::kLeftOf;
        case Predicate::kAbove: return Predicate::kBelow;
        case Predicate::kBelow: return Predicate::kAbove;
    }
    return p;
}

std::vector<std::string> predicate_words(Predicate p) {
    switch (p) {
        case Predicate::kLeftOf: return {"left", "of"};
        case Predicate::kRightOf: return {"right", "of"};
        case Predicate::kAbove: return {"above"};
        case Predicate::kBelow: return {"below"};
    }
    return {};
}

bool holds(Predicate p, const Cell& a, const Cell& b) {
    switch (p) {
        case Predicate::kLeftOf: return a.col < b.col;
        case Predicate::kRightOf: return a.col > b.col;
        case Predicate::kAbove: return a.row < b.row;
        case Predicate::kBelow: return a.row > b.row;
    }
    return false;
}

Predicate describe_relation(const Cell& subject, const Cell& object) {
    if (subject.col != object.col) {
        return subject.col < object.col ? Predicate::kLeftOf : Predicate::kRightOf;
    }
    return subject.row < object.row ? Predicate::kAbove : Predicate::kBelow;
}

Scene generate_scene(std::uint64_t seed) {
    Rng rng = make_rng(seed, "scene");
    Scene scene;
    scene.seed = seed;
    const int count = 1 + static_cast<int>(uniform_index(rng, kMaxObjects));

    std::array<int, kGridCells> cells{};
    for (int i = 0; i < kGridCells; ++i) cells[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: the first `count` entries are the occupied cells.
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(kGridCells - i)));
        std::swap(cells[static_cast<std::size_t>(i)], cells[static_cast<std::size_t>(j)]);
    }

    std::set<std::pair<int, int>> used;
    for (int i = 0; i < count; ++i) {
        SceneObject o;
        do {
            o.shape = static_cast<int>(uniform_index(rng, kShapeNames.size()));
            o.color = static_cast<int>(uniform_index(rng, kColorNames.size()));
        } while (used.count({o.color, o.shape}) != 0);
        used.insert({o.color, o.shape});
        o.size = static_cast<int>(uniform_index(rng, kSizeNames.size()));
        const int cell = cells[static_cast<std::size_t>(i)];
        o.cell = Cell{cell / kGridCols, cell % kGridCols};
        scene.objects.push_back(o);
    }
    for (int i = 0; i + 1 < count; ++i) {
        scene.relations.push_back(
            Relation{i, describe_relation(scene.objects[static_cast<std::size_t>(i)].cell,
                                          scene.objects[static_cast<std::size_t>(i + 1)].cell),
                     i + 1});
    }
    return scene;
}

void validate_scene(const Scene& scene) {
    const auto n = scene.objects.size();
    require(n >= 1 && n <= kMaxObjects, ErrorCode::kContract, "scene must hold 1 to 4 objects");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = scene.objects[i];
        require(o.shape >= 0 && o.shape < static_cast<int>(kShapeNames.size()) && o.color >= 0 &&
                    o.color < static_cast<int>(kColorNames.size()) && o.size >= 0 &&
                    o.size < static_cast<int>(kSizeNames.size()),
                ErrorCode::kContract, "object attribute out of range");
        require(o.cell.row >= 0 && o.cell.row < kGridRows && o.cell.col >= 0 &&
                    o.cell.col < kGridCols,
                ErrorCode::kContract, "object cell outside the grid");
        for (std::size_t j = i + 1; j < n; ++j) {
            require(!(o.cell == scene.objects[j].cell), ErrorCode::kContract,
                    "two objects share a cell");
        }
    }
    for (const auto& r : scene.relations) {
        require(r.subject >= 0 && r.object >= 0 && static_cast<std::size_t>(r.subject) < n &&
                    static_cast<std::size_t>(r.object) < n && r.subject != r.object,
                ErrorCode::kContract, "relation references a missing object");
        require(holds(r.predicate, scene.objects[static_cast<std::size_t>(r.subject)].cell,
                      scene.objects[static_cast<std::size_t>(r.object)].cell),
                ErrorCode::kContract, "relation inconsistent with cell geometry");
    }
}

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"shape", kShapeNames[static_cast<std::size_t>(o.shape)]},
                           {"color", kColorNames[static_cast<std::size_t>(o.color)]},
                           {"size", kSizeNames[static_cast<std::size_t>(o.size)]},
                           {"cell", {o.cell.row, o.cell.col}}});
    }
    nlohmann::json relations = nlohmann::json::array();
    for (const auto& r : scene.relations) {
        relations.push_back({{"subject", r.subject},
                             {"predicate", predicate_name(r.predicate)},
                             {"object", r.object}});
    }
    return {{"seed", scene.seed}, {"objects", objects}, {"relations", relations}};
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    try {
        scene.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& o : j.at("objects")) {
            SceneObject obj;
            obj.shape = index_of(kShapeNames, o.at("shape").get<std::string>(), "shape");
            obj.color = index_of(kColorNames, o.at("color").get<std::string>(), "color");
            obj.size = index_of(kSizeNames, o.at("size").get<std::string>(), "size");
            obj.cell = Cell{o.at("cell").at(0).get<int>(), o.at("cell").at(1).get<int>()};
            scene.objects.push_back(obj);
        }
        for (const auto& r : j.at("relations")) {
            scene.relations.push_back(Relation{r.at("subject").get<int>(),
                                               parse_predicate(r.at("predicate").get<std::string>()),
                                               r.at("object").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed scene JSON: ") + e.what());
    }
    validate_scene(scene);
    return scene;
}

SceneFeaturizer::SceneFeaturizer(int feature_dim, std::uint64_t featurizer_seed)
    : feature_dim_(feature_dim) {
    require(feature_dim > 0, ErrorCode::kParameter, "feature_dim must be positive");
    Rng rng = make_rng(featurizer_seed, "featurizer");
    auto table = [&](std::size_t rows) {
        Mat<float> m(static_cast<Eigen::Index>(rows), feature_dim);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<float>(gaussian(rng));
        }
        return m;
    };
    shape_table_ = table(kShapeNames.size());
    color_table_ = table(kColorNames.size());
    size_table_ = table(kSizeNames.size());
    position_table_ = table(kGridCells);
    empty_code_ = table(1);
}

Mat<float> SceneFeaturizer::featurize(const Scene& scene) const {
    Mat<float> out(kGridCells, feature_dim_);
    for (int c = 0; c < kGridCells; ++c) {
        out.row(c) = position_table_.row(c) + empty_code_.row(0);
    }
    for (const auto& o : scene.objects) {
        const int c = o.cell.row * kGridCols + o.cell.col;
        out.row(c) = position_table_.row(c) + shape_table_.row(o.shape) +
                     color_table_.row(o.color) + size_table_.row(o.size);
    }
    return out;
}

std::vector<int> salient_objects(const Scene& scene, std::size_t count) {
    std::vector<int> order(scene.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scene.objects[static_cast<std::size_t>(a)].size >
               scene.objects[static_cast<std::size_t>(b)].size;
    });
    order.resize(std::min(count, order.size()));
    return order;
}

CompositionalCaption short_caption_structure(const Scene& scene) {
    const auto salient = salient_objects(scene, 2);
    CompositionalCaption c;
    const auto& a = scene.objects[static_cast<std::size_t>(salient[0])];
    c.first = phrase_for(a, false);
    if (salient.size() > 1) {
        const auto& b = scene.objects[static_cast<std::size_t>(salient[1])];
        c.predicate = describe_relation(a.cell, b.cell);
        c.second = phrase_for(b, false);
    }
    return c;
}

CaptionPair caption(const Scene& scene) {
    const auto& tok = Tokenizer::instance();
    CaptionPair pair;
    pair.short_text = render(short_caption_structure(scene));

    std::vector<std::string> w;
    auto push = [&w](std::initializer_list<std::string_view> words) {
        for (const auto s : words) w.emplace_back(s);
    };
    const std::size_t n = scene.objects.size();
    if (n == 1) {
        push({"there", "is", "one", "object", "in", "the", "image", "."});
    } else {
        push({"there", "are", kCountNames[n - 1], "objects", "in", "the", "image", "."});
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = scene.objects[i];
        push({"the", kOrdinalNames[i], "object", "is", "a",
              kSizeNames[static_cast<std::size_t>(o.size)],
              kColorNames[static_cast<std::size_t>(o.color)],
              kShapeNames[static_cast<std::size_t>(o.shape)], "in", "the",
              o.cell.row == 0 ? "top" : "bottom", "row", "and", "the",
              kOrdinalNames[static_cast<std::size_t>(o.cell.col)], "column", "."});
    }
    for (const auto& r : scene.relations) {
        push({"the", kOrdinalNames[static_cast<std::size_t>(r.subject)], "object", "is"});
        for (const auto& pw : predicate_words(r.predicate)) w.push_back(pw);
        push({"the", kOrdinalNames[static_cast<std::size_t>(r.object)], "object", "."});
    }
    push({"there", "is", "nothing", "else", "in", "the", "image", "."});
    pair.long_text = join_words(w);

    pair.short_tokens = tok.tokenize(pair.short_text);
    pair.long_tokens = tok.tokenize(pair.long_text);
    require(pair.short_tokens.size() < kShortCaptionMaxTokens &&
                pair.long_tokens.size() >= kLongCaptionMinTokens &&
                pair.long_tokens.size() <= kLongCaptionMaxTokens,
            ErrorCode::kInternal, "caption length outside the short/long ranges");
    require(word_jaccard(pair.short_tokens, pair.long_tokens) < 0.8, ErrorCode::kInternal,
            "short and long captions overlap too much");
    return pair;
}

double word_jaccard(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
    const std::set<TokenId> sa(a.begin(), a.end());
    const std::set<TokenId> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string render(const CompositionalCaption& c) {
    std::vector<std::string> w;
    auto np = [&w](const NounPhrase& p) {
        w.emplace_back(p.numeral ? "one" : "a");
        if (p.size >= 0) w.emplace_back(kSizeNames[static_cast<std::size_t>(p.size)]);
        w.emplace_back(kColorNames[static_cast<std::size_t>(p.color)]);
        w.emplace_back(kShapeNames[static_cast<std::size_t>(p.shape)]);
    };
    np(c.first);
    if (c.predicate && c.second) {
        for (const auto& pw : predicate_words(*c.predicate)) w.push_back(pw);
        np(*c.second);
    }
    if (c.extra) {
        w.emplace_back("and");
        np(*c.extra);
    }
    return join_words(w);
}

CompositionalCaption parse_compositional(std::string_view text) {
    const auto w = split_words(text);
    std::size_t i = 0;
    auto bad = [&]() -> Error {
        return Error(ErrorCode::kTemplate, "not a compositional caption: '" + std::string(text) + "'");
    };
    auto find = [](const auto& names, const std::string& s) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (names[k] == s) return static_cast<int>(k);
        }
        return -1;
    };
    auto parse_np = [&]() {
        NounPhrase p;
        if (i >= w.size() || (w[i] != "a" && w[i] != "one")) throw bad();
        p.numeral = w[i] == "one";
        ++i;
        if (i < w.size() && find(kSizeNames, w[i]) >= 0) {
            p.size = find(kSizeNames, w[i]);
            ++i;
        }
        if (i >= w.size() || find(kColorNames, w[i]) < 0) throw bad();
        p.color = find(kColorNames, w[i++]);
        if (i >= w.size() || find(kShapeNames, w[i]) < 0) throw bad();
        p.shape = find(kShapeNames, w[i++]);
        return p;
    };
    CompositionalCaption c;
    c.first = parse_np();
    if (i < w.size() && w[i] != "and") {
        if (w[i] == "above") {
            c.predicate = Predicate::kAbove;
            ++i;
        } else if (w[i] == "below") {
            c.predicate = Predicate::kBelow;
            ++i;
        } else if ((w[i] == "left" || w[i] == "right") && i + 1 < w.size() && w[i + 1] == "of") {
            c.predicate = w[i] == "left" ? Predicate::kLeftOf : Predicate::kRightOf;
            i += 2;
        } else {
            throw bad();
        }
        c.second = parse_np();
    }
    if (i < w.size() && w[i] == "and") {
        ++i;
        c.extra = parse_np();
    }
    if (i != w.size()) throw bad();
    return c;
}

bool is_true_of(const CompositionalCaption& c, const Scene& scene) {
    std::vector<const NounPhrase*> phrases{&c.first};
    if (c.second) phrases.push_back(&*c.second);
    if (c.extra) phrases.push_back(&*c.extra);
    const std::size_t n = scene.objects.size();
    if (phrases.size() > n) return false;

    std::vector<int> assign(phrases.size(), -1);
    std::vector<bool> taken(n, false);
    auto search = [&](auto&& self, std::size_t k) -> bool {
        if (k == phrases.size()) {
            if (c.predicate && c.second) {
                return holds(*c.predicate, scene.objects[static_cast<std::size_t>(assign[0])].cell,
                             scene.objects[static_cast<std::size_t>(assign[1])].cell);
            }
            return true;
        }
        for (std::size_t o = 0; o < n; ++o) {
            if (taken[o] || !matches(*phrases[k], scene.objects[o])) continue;
            taken[o] = true;
            assign[k] = static_cast<int>(o);
            if (self(self, k + 1)) return true;
            taken[o] = false;
        }
        return false;
    };
    return search(search, 0);
}

bool is_true_of(std::string_view text, const Scene& scene) {
    return is_true_of(parse_compositional(text), scene);
}

std::string_view category_name(NegativeCategory c) {
    switch (c) {
        case NegativeCategory::kReplaceObject: return "replace-object";
        case NegativeCategory::kReplaceAttribute: return "replace-attribute";
        case NegativeCategory::kReplaceRelation: return "replace-relation";
        case NegativeCategory::kSwapObject: return "swap-object";
        case NegativeCategory::kSwapAttribute: return "swap-attribute";
        case NegativeCategory::kAddObject: return "add-object";
        case NegativeCategory::kAddAttribute: return "add-attribute";
    }
    return "";
}

NegativeCategory parse_category(std::string_view name) {
    for (const auto c : kAllCategories) {
        if (category_name(c) == name) return c;
    }
    fail(ErrorCode::kParameter, "unknown negative category '" + std::string(name) + "'");
}

std::string_view category_group(NegativeCategory c) {
    switch (c) {
        case NegativeCategory::kReplaceObject:
        case NegativeCategory::kReplaceAttribute:
        case NegativeCategory::kReplaceRelation: return "replace";
        case NegativeCategory::kSwapObject:
        case NegativeCategory::kSwapAttribute: return "swap";
        case NegativeCategory::kAddObject:
        case NegativeCategory::kAddAttribute: return "add";
    }
    return "";
}

namespace {

std::optional<CompositionalCaption> first_false(const Scene& scene,
                                                std::vector<CompositionalCaption> candidates) {
    for (auto& c : candidates) {
        if (!is_true_of(c, scene)) return c;
    }
    return std::nullopt;
}

std::optional<CompositionalCaption> negative_for(NegativeCategory category, const Scene& scene,
                                                 const CompositionalCaption& positive, Rng& rng) {
    std::vector<CompositionalCaption> candidates;
    switch (category) {
        case NegativeCategory::kReplaceObject:
        case NegativeCategory::kReplaceAttribute: {
            const bool shape = category == NegativeCategory::kReplaceObject;
            const std::size_t values = shape ? kShapeNames.size() : kColorNames.size();
            const std::size_t offset = uniform_index(rng, values - 1);
            const std::size_t slots = positive.second ? 2 : 1;
            const std::size_t start = uniform_index(rng, slots);
            for (std::size_t s = 0; s < slots; ++s) {
                for (std::size_t k = 0; k + 1 < values; ++k) {
                    CompositionalCaption c = positive;
                    NounPhrase* np = (start + s) % slots == 0 ? &c.first : &*c.second;
                    int& field = shape ? np->shape : np->color;
                    field = static_cast<int>((static_cast<std::size_t>(field) + 1 + (offset + k) % (values - 1)) % values);
                    candidates.push_back(c);
                }
            }
            break;
        }
        case NegativeCategory::kReplaceRelation: {
            if (!positive.predicate) return std::nullopt;
            const Predicate p = *positive.predicate;
            std::vector<Predicate> order{inverse(p)};
            for (const auto q : {Predicate::kLeftOf, Predicate::kRightOf, Predicate::kAbove,
                                 Predicate::kBelow}) {
                if (q != p && q != inverse(p)) order.push_back(q);
            }
            for (const auto q : order) {
                CompositionalCaption c = positive;
                c.predicate = q;
                candidates.push_back(c);
            }
            break;
        }
        case NegativeCategory::kSwapObject: {
            if (!positive.second) return std::nullopt;
            CompositionalCaption c = positive;
            std::swap(c.first, *c.second);
            candidates.push_back(c);
            break;
        }
        case NegativeCategory::kSwapAttribute: {
            if (!positive.second || positive.first.color == positive.second->color) {
                return std::nullopt;
            }
            CompositionalCaption c = positive;
            std::swap(c.first.color, c.second->color);
            candidates.push_back(c);
            break;
        }
        case NegativeCategory::kAddObject: {
            if (positive.extra) return std::nullopt;
            const std::size_t total = kShapeNames.size() * kColorNames.size();
            const std::size_t offset = uniform_index(rng, total);
            for (std::size_t k = 0; k < total; ++k) {
                const std::size_t v = (offset + k) % total;
                CompositionalCaption c = positive;
                c.extra = NounPhrase{-1, static_cast<int>(v % kColorNames.size()),
                                     static_cast<int>(v / kColorNames.size()), false};
                candidates.push_back(c);
            }
            break;
        }
        case NegativeCategory::kAddAttribute: {
            const std::size_t size_offset = uniform_index(rng, kSizeNames.size());
            const std::size_t slots = positive.second ? 2 : 1;
            const std::size_t start = uniform_index(rng, slots);
            for (std::size_t s = 0; s < slots; ++s) {
                for (std::size_t k = 0; k < kSizeNames.size(); ++k) {
                    CompositionalCaption c = positive;
                    NounPhrase* np = (start + s) % slots == 0 ? &c.first : &*c.second;
                    if (np->size >= 0) continue;
                    np->size = static_cast<int>((size_offset + k) % kSizeNames.size());
                    candidates.push_back(c);
                }
            }
            break;
        }
    }
    return first_false(scene, std::move(candidates));
}

}  // namespace

NegativeSet make_negatives(const Scene& scene, const CompositionalCaption& positive) {
    require(is_true_of(positive, scene), ErrorCode::kContract,
            "positive caption is not true of the scene");
    NegativeSet out;
    const std::string pos_text = render(positive);
    for (const auto category : kAllCategories) {
        Rng rng = make_rng(scene.seed, "negatives", {static_cast<std::uint64_t>(category)});
        const auto neg = negative_for(category, scene, positive, rng);
        if (neg) {
            out.negatives.push_back(HardNegative{category, pos_text, render(*neg)});
        } else {
            out.skipped.push_back(category);
        }
    }
    return out;
}

CompositionalCaption paraphrase(const CompositionalCaption& c) {
    CompositionalCaption p = c;
    if (c.predicate && c.second) {
        p.first = *c.second;
        p.second = c.first;
        p.predicate = inverse(*c.predicate);
    } else {
        p.first.numeral = !c.first.numeral;
    }
    return p;
}

std::uint64_t scene_seed(std::uint64_t global_seed, std::uint64_t index, bool heldout) {
    require(index < (std::uint64_t{1} << 31), ErrorCode::kParameter, "scene index too large");
    const std::uint64_t split = heldout ? (std::uint64_t{1} << 31) : 0;
    return ((global_seed & 0xFFFFFFFFULL) << 32) | split | index;
}

DatasetRecord make_record(std::uint64_t seed) {
    DatasetRecord r;
    r.scene = generate_scene(seed);
    r.captions = caption(r.scene);
    r.negatives = make_negatives(r.scene, short_caption_structure(r.scene));
    return r;
}

nlohmann::json record_to_json(const DatasetRecord& r) {
    nlohmann::json negatives = nlohmann::json::object();
    for (const auto& n : r.negatives.negatives) {
        negatives[std::string(category_name(n.category))] = n.negative;
    }
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto c : r.negatives.skipped) skipped.push_back(category_name(c));
    return {{"seed", r.scene.seed},
            {"scene", scene_to_json(r.scene)},
            {"short", r.captions.short_text},
            {"long", r.captions.long_text},
            {"negatives", negatives},
            {"skipped", skipped}};
}

DatasetRecord record_from_json(const nlohmann::json& j) {
    DatasetRecord r;
    try {
        r.scene = scene_from_json(j.at("scene"));
        const auto& tok = Tokenizer::instance();
        r.captions.short_text = j.at("short").get<std::string>();
        r.captions.long_text = j.at("long").get<std::string>();
        r.captions.short_tokens = tok.tokenize(r.captions.short_text);
        r.captions.long_tokens = tok.tokenize(r.captions.long_text);
        const std::string positive = r.captions.short_text;
        for (const auto& [name, text] : j.at("negatives").items()) {
            r.negatives.negatives.push_back(
                HardNegative{parse_category(name), positive, text.get<std::string>()});
        }
        for (const auto& name : j.at("skipped")) {
            r.negatives.skipped.push_back(parse_category(name.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::kConfig, std::string("malformed dataset record: ") + e.what());
    }
    // JSON objects iterate in key order; restore the canonical category order.
    std::sort(r.negatives.negatives.begin(), r.negatives.negatives.end(),
              [](const HardNegative& a, const HardNegative& b) { return a.category < b.category; });
    return r;
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + path + "' for writing");
    for (const auto& r : records) {
        out << record_to_json(r).dump() << '\n';
    }
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing '" + path + "'");
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::kIo, "cannot open dataset '" + path + "'");
    std::vector<DatasetRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kConfig, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(record_from_json(j));
    }
    return records;
}

}  // namespace disclvlm
