#include "vlt/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace vlt {

namespace {

constexpr int kGridSide = 3;
constexpr double kSmallRadius = 5.0;
constexpr double kLargeRadius = 9.0;
constexpr unsigned char kBackground = 16;

const char* kPositionPhrases[9] = {
    "at the top left",    "at the top",    "at the top right",
    "on the left",        "in the middle", "on the right",
    "at the bottom left", "at the bottom", "at the bottom right",
};

struct Relation {
    const char* phrase;  // inserted between subject and reference descriptor
    int kind;            // 0 left-of, 1 right-of, 2 above, 3 below
};

constexpr Relation kRelations[4] = {{"left of", 0}, {"right of", 1}, {"above", 2}, {"below", 3}};

bool relation_holds(const SceneObject& a, const SceneObject& b, int kind) {
    const int col_a = a.cell % kGridSide, col_b = b.cell % kGridSide;
    const int row_a = a.cell / kGridSide, row_b = b.cell / kGridSide;
    switch (kind) {
        case 0: return col_a < col_b;
        case 1: return col_a > col_b;
        case 2: return row_a < row_b;
        case 3: return row_a > row_b;
    }
    return false;
}

bool point_in_object(const SceneObject& o, double px, double py) {
    const double dx = px - o.cx, dy = py - o.cy;
    switch (o.shape) {
        case ObjShape::Circle:
            return dx * dx + dy * dy <= o.radius * o.radius;
        case ObjShape::Square:
            return std::abs(dx) <= o.radius && std::abs(dy) <= o.radius;
        case ObjShape::Triangle: {
            // Upward isoceles triangle: apex (cx, cy - r), base corners (cx +- r, cy + r).
            if (dy < -o.radius || dy > o.radius) return false;
            const double half_width = (dy + o.radius) * 0.5;
            return std::abs(dx) <= half_width;
        }
    }
    return false;
}

int color_index(const std::string& name) {
    for (int i = 0; i < 8; ++i) {
        if (name == kPalette[i].name) return i;
    }
    return -1;
}

std::optional<ObjShape> shape_from_name(const std::string& name) {
    if (name == "circle") return ObjShape::Circle;
    if (name == "square") return ObjShape::Square;
    if (name == "triangle") return ObjShape::Triangle;
    return std::nullopt;
}

// Structured form of a template-grammar expression.
struct ParsedExpression {
    std::optional<ObjSize> size;
    int color = -1;  // -1 = unspecified
    ObjShape shape = ObjShape::Circle;
    int cell = -1;   // -1 = unspecified
    int relation = -1;
    int ref_color = -1;
    std::optional<ObjShape> ref_shape;
};

ParsedExpression parse_expression(const std::string& text) {
    const std::vector<std::string> toks = Vocabulary::tokenize(text);
    std::size_t i = 0;
    auto expect = [&](const std::string& word) {
        if (i >= toks.size() || toks[i] != word) {
            throw AmbiguityError("resolve: expected '" + word + "' in '" + text + "'");
        }
        ++i;
    };
    auto peek = [&]() -> const std::string& {
        static const std::string empty;
        return i < toks.size() ? toks[i] : empty;
    };

    ParsedExpression pe;
    expect("the");
    if (peek() == "small" || peek() == "large") {
        pe.size = peek() == "small" ? ObjSize::Small : ObjSize::Large;
        ++i;
    }
    if (color_index(peek()) >= 0) {
        pe.color = color_index(peek());
        ++i;
    }
    auto shape = shape_from_name(peek());
    if (!shape) throw AmbiguityError("resolve: expected a shape word in '" + text + "'");
    pe.shape = *shape;
    ++i;

    if (i == toks.size()) return pe;

    // Either a position phrase or a relation clause follows.
    std::string rest;
    for (std::size_t j = i; j < toks.size(); ++j) {
        if (j > i) rest += ' ';
        rest += toks[j];
    }
    for (int cell = 0; cell < 9; ++cell) {
        if (rest == kPositionPhrases[cell]) {
            pe.cell = cell;
            return pe;
        }
    }
    for (const Relation& rel : kRelations) {
        const std::string phrase = rel.phrase;
        if (rest.rfind(phrase + " the ", 0) == 0) {
            pe.relation = rel.kind;
            std::string ref = rest.substr(phrase.size() + 5);
            std::istringstream rs(ref);
            std::string w1, w2, extra;
            rs >> w1 >> w2;
            if (rs >> extra) throw AmbiguityError("resolve: trailing words in '" + text + "'");
            if (w2.empty()) {  // bare shape reference
                auto s = shape_from_name(w1);
                if (!s) throw AmbiguityError("resolve: bad reference in '" + text + "'");
                pe.ref_shape = *s;
            } else {
                pe.ref_color = color_index(w1);
                auto s = shape_from_name(w2);
                if (pe.ref_color < 0 || !s) throw AmbiguityError("resolve: bad reference in '" + text + "'");
                pe.ref_shape = *s;
            }
            return pe;
        }
    }
    throw AmbiguityError("resolve: unparseable tail '" + rest + "' in '" + text + "'");
}

std::vector<int> match_objects(const SceneSpec& scene, const ParsedExpression& pe) {
    // Resolve the reference descriptor first, if any.
    int ref_id = -1;
    if (pe.relation >= 0) {
        std::vector<int> refs;
        for (const SceneObject& o : scene.objects) {
            if (o.shape != *pe.ref_shape) continue;
            if (pe.ref_color >= 0 && o.color != pe.ref_color) continue;
            refs.push_back(o.id);
        }
        if (refs.size() != 1) return {};  // ambiguous reference, no match
        ref_id = refs[0];
    }
    std::vector<int> hits;
    for (const SceneObject& o : scene.objects) {
        if (o.shape != pe.shape) continue;
        if (pe.color >= 0 && o.color != pe.color) continue;
        if (pe.size && o.size != *pe.size) continue;
        if (pe.cell >= 0 && o.cell != pe.cell) continue;
        if (pe.relation >= 0) {
            if (o.id == ref_id) continue;
            if (!relation_holds(o, scene.objects[static_cast<std::size_t>(ref_id)], pe.relation)) continue;
        }
        hits.push_back(o.id);
    }
    return hits;
}

std::string join_words(std::initializer_list<std::string> words) {
    std::string out;
    for (const auto& w : words) {
        if (w.empty()) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

TemplateMode template_mode_from_string(const std::string& s) {
    if (s == "mixed") return TemplateMode::Mixed;
    if (s == "rich") return TemplateMode::Rich;
    if (s == "posfree") return TemplateMode::PosFree;
    throw std::invalid_argument("templates must be mixed|rich|posfree, got '" + s + "'");
}

std::string to_string(TemplateMode m) {
    switch (m) {
        case TemplateMode::Mixed: return "mixed";
        case TemplateMode::Rich: return "rich";
        case TemplateMode::PosFree: return "posfree";
    }
    return "?";
}

const char* shape_name(ObjShape s) {
    switch (s) {
        case ObjShape::Circle: return "circle";
        case ObjShape::Square: return "square";
        case ObjShape::Triangle: return "triangle";
    }
    return "?";
}

const char* size_name(ObjSize s) { return s == ObjSize::Small ? "small" : "large"; }

const char* cell_position_phrase(int cell) {
    if (cell < 0 || cell >= 9) throw std::out_of_range("cell_position_phrase: cell out of range");
    return kPositionPhrases[cell];
}

SceneSpec generate_scene(int id, std::uint64_t seed, int image_size) {
    Rng rng(seed);
    SceneSpec scene;
    scene.id = id;
    scene.seed = seed;
    scene.image_size = image_size;

    const int n_objects = rng.uniform_int(2, 4);
    std::vector<int> cells(9);
    for (int i = 0; i < 9; ++i) cells[static_cast<std::size_t>(i)] = i;
    rng.shuffle(cells);
    std::vector<int> combos(24);  // (shape, color) pairs
    for (int i = 0; i < 24; ++i) combos[static_cast<std::size_t>(i)] = i;
    rng.shuffle(combos);

    const double cell_span = static_cast<double>(image_size) / kGridSide;
    for (int i = 0; i < n_objects; ++i) {
        SceneObject o;
        o.id = i;
        o.shape = static_cast<ObjShape>(combos[static_cast<std::size_t>(i)] % 3);
        o.color = combos[static_cast<std::size_t>(i)] / 3;
        o.size = rng.uniform_int(0, 1) ? ObjSize::Large : ObjSize::Small;
        o.cell = cells[static_cast<std::size_t>(i)];
        o.radius = o.size == ObjSize::Small ? kSmallRadius : kLargeRadius;
        const int col = o.cell % kGridSide, row = o.cell / kGridSide;
        o.cx = (col + 0.5) * cell_span + rng.uniform_int(-1, 1);
        o.cy = (row + 0.5) * cell_span + rng.uniform_int(-1, 1);
        scene.objects.push_back(o);
    }
    return scene;
}

RgbImage render_scene(const SceneSpec& scene) {
    RgbImage img;
    img.h = img.w = scene.image_size;
    img.pixels.assign(static_cast<std::size_t>(img.h) * img.w * 3, kBackground);
    for (const SceneObject& o : scene.objects) {
        const PaletteColor& c = kPalette[o.color];
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                if (point_in_object(o, x + 0.5, y + 0.5)) {
                    unsigned char* px = img.pixels.data() + (static_cast<std::size_t>(y) * img.w + x) * 3;
                    px[0] = c.r;
                    px[1] = c.g;
                    px[2] = c.b;
                }
            }
        }
    }
    return img;
}

ByteMask render_object_mask(const SceneSpec& scene, int object_id) {
    if (object_id < 0 || object_id >= static_cast<int>(scene.objects.size())) {
        throw std::out_of_range("render_object_mask: no object " + std::to_string(object_id));
    }
    const SceneObject& o = scene.objects[static_cast<std::size_t>(object_id)];
    ByteMask mask;
    mask.h = mask.w = scene.image_size;
    mask.pixels.assign(static_cast<std::size_t>(mask.h) * mask.w, 0);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (point_in_object(o, x + 0.5, y + 0.5)) {
                mask.pixels[static_cast<std::size_t>(y) * mask.w + x] = 1;
            }
        }
    }
    return mask;
}

std::vector<std::string> unique_expressions_for_object(const SceneSpec& scene, int object_id, TemplateMode mode) {
    const SceneObject& o = scene.objects[static_cast<std::size_t>(object_id)];
    const std::string color = kPalette[o.color].name;
    const std::string shape = shape_name(o.shape);
    const std::string size = size_name(o.size);
    const std::string pos = cell_position_phrase(o.cell);

    std::vector<std::string> candidates;
    const bool want_posfree = mode != TemplateMode::Rich;
    const bool want_rich = mode != TemplateMode::PosFree;
    if (want_posfree) {
        candidates.push_back(join_words({"the", color, shape}));
        candidates.push_back(join_words({"the", size, shape}));
        candidates.push_back(join_words({"the", size, color, shape}));
    }
    if (want_rich) {
        candidates.push_back(join_words({"the", shape, pos}));
        candidates.push_back(join_words({"the", color, shape, pos}));
        candidates.push_back(join_words({"the", size, shape, pos}));
        candidates.push_back(join_words({"the", size, color, shape, pos}));
        for (const SceneObject& other : scene.objects) {
            if (other.id == o.id) continue;
            for (const Relation& rel : kRelations) {
                if (!relation_holds(o, other, rel.kind)) continue;
                candidates.push_back(join_words({"the", color, shape, rel.phrase, "the",
                                                 kPalette[other.color].name, shape_name(other.shape)}));
            }
        }
    }

    std::vector<std::string> unique;
    for (const std::string& text : candidates) {
        try {
            if (resolve_expression_bruteforce(scene, text) == object_id) unique.push_back(text);
        } catch (const AmbiguityError&) {
            // matches zero or several objects; dropped
        }
    }
    return unique;
}

std::vector<Expression> expressions_for_scene(const SceneSpec& scene, TemplateMode mode, Rng& rng) {
    std::vector<Expression> out;
    for (const SceneObject& o : scene.objects) {
        std::vector<std::string> pool = unique_expressions_for_object(scene, o.id, mode);
        if (pool.size() < 2) {
            throw std::runtime_error("expressions_for_scene: object " + std::to_string(o.id) + " of scene " +
                                     std::to_string(scene.id) + " has fewer than 2 unique expressions");
        }
        rng.shuffle(pool);
        const int want = std::min<int>(rng.uniform_int(2, 4), static_cast<int>(pool.size()));
        for (int e = 0; e < want; ++e) out.push_back(Expression{pool[static_cast<std::size_t>(e)], o.id});
    }
    return out;
}

int resolve_expression_bruteforce(const SceneSpec& scene, const std::string& expression) {
    const ParsedExpression pe = parse_expression(expression);
    const std::vector<int> hits = match_objects(scene, pe);
    if (hits.empty()) throw AmbiguityError("resolve: '" + expression + "' matches no object");
    if (hits.size() > 1) {
        throw AmbiguityError("resolve: '" + expression + "' matches " + std::to_string(hits.size()) + " objects");
    }
    return hits[0];
}

std::vector<std::string> template_vocabulary() {
    std::vector<std::string> words = {"the", "small", "large", "circle", "square", "triangle",
                                      "at", "on", "in", "top", "bottom", "left", "right", "middle",
                                      "of", "above", "below"};
    for (const PaletteColor& c : kPalette) words.push_back(c.name);
    std::sort(words.begin(), words.end());
    return words;
}

void generate_dataset(const std::string& out_dir, int n_scenes, std::uint64_t seed, TemplateMode mode) {
    if (n_scenes < 1) throw std::invalid_argument("generate_dataset: n_scenes must be >= 1");
    fs::create_directories(fs::path(out_dir) / "scenes");
    fs::create_directories(fs::path(out_dir) / "masks");

    Vocabulary vocab = Vocabulary::build(template_vocabulary());
    vocab.save((fs::path(out_dir) / "vocab.txt").string());

    std::ofstream samples_os(fs::path(out_dir) / "samples.jsonl", std::ios::trunc);
    if (!samples_os) throw std::runtime_error("generate_dataset: cannot write samples.jsonl");

    constexpr int kRetryCap = 16;
    for (int i = 0; i < n_scenes; ++i) {
        SceneSpec scene;
        std::vector<Expression> expressions;
        bool ok = false;
        for (int attempt = 0; attempt < kRetryCap && !ok; ++attempt) {
            scene = generate_scene(i, Rng::mix(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt)));
            Rng expr_rng(Rng::mix(seed ^ 0xe59c55ULL, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt)));
            try {
                expressions = expressions_for_scene(scene, mode, expr_rng);
                ok = true;
            } catch (const std::runtime_error&) {
                // regenerate the scene with a new derived seed
            }
        }
        if (!ok) throw std::runtime_error("generate_dataset: scene " + std::to_string(i) + " exhausted retries");

        const std::string image_rel = "scenes/" + std::to_string(i) + ".ppm";
        write_ppm((fs::path(out_dir) / image_rel).string(), render_scene(scene));
        for (const SceneObject& o : scene.objects) {
            const std::string mask_rel = "masks/" + std::to_string(i) + "_" + std::to_string(o.id) + ".pbm";
            write_pbm((fs::path(out_dir) / mask_rel).string(), render_object_mask(scene, o.id));
        }

        std::map<int, int> next_expr_id;
        for (const Expression& e : expressions) {
            nlohmann::json rec;
            rec["image_id"] = scene.id;
            rec["object_id"] = e.object_id;
            rec["expression_id"] = next_expr_id[e.object_id]++;
            rec["text"] = e.text;
            rec["image"] = image_rel;
            rec["mask"] = "masks/" + std::to_string(i) + "_" + std::to_string(e.object_id) + ".pbm";
            samples_os << rec.dump() << '\n';
        }
    }
}

std::uint64_t hash_dataset_dir(const std::string& dir) {
    auto hash_file = [](const fs::path& p, std::uint64_t h) {
        std::ifstream is(p, std::ios::binary);
        if (!is) throw std::runtime_error("hash_dataset_dir: missing " + p.string());
        std::ostringstream buf;
        buf << is.rdbuf();
        const std::string bytes = buf.str();
        return fnv1a64(bytes, h);
    };
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_file(fs::path(dir) / "vocab.txt", h);
    h = hash_file(fs::path(dir) / "samples.jsonl", h);

    std::ifstream is(fs::path(dir) / "samples.jsonl");
    std::string line;
    std::vector<std::string> files;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        files.push_back(rec.at("image").get<std::string>());
        files.push_back(rec.at("mask").get<std::string>());
    }
    std::sort(files.begin(), files.end());
    files.erase(std::unique(files.begin(), files.end()), files.end());
    for (const std::string& f : files) h = hash_file(fs::path(dir) / f, h);
    return h;
}

Dataset Dataset::load(const std::string& dir) {
    Dataset ds;
    ds.vocab_ = Vocabulary::load((fs::path(dir) / "vocab.txt").string());

    std::ifstream is(fs::path(dir) / "samples.jsonl");
    if (!is) throw std::runtime_error("Dataset: cannot open samples.jsonl in '" + dir + "'");

    std::map<std::string, int> image_refs, mask_refs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        DataSample s;
        s.image_id = rec.at("image_id").get<int>();
        s.object_id = rec.at("object_id").get<int>();
        s.expression_id = rec.at("expression_id").get<int>();
        s.text = rec.at("text").get<std::string>();
        s.token_ids = ds.vocab_.encode(s.text);

        const std::string image_path = rec.at("image").get<std::string>();
        auto [it_img, new_img] = image_refs.try_emplace(image_path, static_cast<int>(ds.images_.size()));
        if (new_img) {
            const RgbImage img = read_ppm((fs::path(dir) / image_path).string());
            if (ds.image_h_ == 0) {
                ds.image_h_ = img.h;
                ds.image_w_ = img.w;
            } else if (img.h != ds.image_h_ || img.w != ds.image_w_) {
                throw std::runtime_error("Dataset: inconsistent image sizes");
            }
            ds.images_.push_back(image_to_tensor(img));
        }
        s.image_ref = it_img->second;

        const std::string mask_path = rec.at("mask").get<std::string>();
        auto [it_mask, new_mask] = mask_refs.try_emplace(mask_path, static_cast<int>(ds.masks_.size()));
        if (new_mask) ds.masks_.push_back(read_pbm((fs::path(dir) / mask_path).string()));
        s.mask_ref = it_mask->second;

        ds.samples_.push_back(std::move(s));
    }
    if (ds.samples_.empty()) throw std::runtime_error("Dataset: no samples in '" + dir + "'");

    std::sort(ds.samples_.begin(), ds.samples_.end(), [](const DataSample& a, const DataSample& b) {
        return std::tie(a.image_id, a.object_id, a.expression_id) < std::tie(b.image_id, b.object_id, b.expression_id);
    });
    for (std::size_t i = 0; i < ds.samples_.size(); ++i) {
        const DataSample& s = ds.samples_[i];
        ds.by_object_[{s.image_id, s.object_id}].push_back(static_cast<int>(i));
        ds.by_image_[s.image_id].push_back(static_cast<int>(i));
    }
    return ds;
}

const std::vector<int>& Dataset::of_object(int image_id, int object_id) const {
    static const std::vector<int> empty;
    auto it = by_object_.find({image_id, object_id});
    return it == by_object_.end() ? empty : it->second;
}

const std::vector<int>& Dataset::of_image(int image_id) const {
    static const std::vector<int> empty;
    auto it = by_image_.find(image_id);
    return it == by_image_.end() ? empty : it->second;
}

}  // namespace vlt
