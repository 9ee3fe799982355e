#pragma once

#include <map>
#include <string>
#include <vector>

#include "vlt/common.hpp"
#include "vlt/encoders.hpp"
#include "vlt/image_io.hpp"
#include "vlt/tensor.hpp"

namespace vlt {

enum class ObjShape { Circle, Square, Triangle };
enum class ObjSize { Small, Large };

struct PaletteColor {
    const char* name;
    unsigned char r, g, b;
};

// Eight well-separated colors; the background stays near black.
inline constexpr PaletteColor kPalette[8] = {
    {"red", 230, 25, 25},    {"green", 25, 230, 25},  {"blue", 25, 25, 230},   {"yellow", 230, 230, 25},
    {"purple", 140, 25, 230}, {"cyan", 25, 230, 230}, {"white", 240, 240, 240}, {"orange", 230, 140, 25},
};

struct SceneObject {
    int id = 0;
    ObjShape shape = ObjShape::Circle;
    int color = 0;       // palette index
    ObjSize size = ObjSize::Small;
    int cell = 0;        // 0..8, row-major 3x3 grid
    double cx = 0, cy = 0;
    double radius = 0;   // half-extent in pixels
};

struct SceneSpec {
    int id = 0;
    int image_size = 64;
    std::uint64_t seed = 0;
    std::vector<SceneObject> objects;  // >= 2, pairwise distinct (shape, color)
};

enum class TemplateMode { Mixed, Rich, PosFree };

TemplateMode template_mode_from_string(const std::string& s);
std::string to_string(TemplateMode m);

const char* shape_name(ObjShape s);
const char* size_name(ObjSize s);
const char* cell_position_phrase(int cell);

SceneSpec generate_scene(int id, std::uint64_t seed, int image_size = 64);
RgbImage render_scene(const SceneSpec& scene);
ByteMask render_object_mask(const SceneSpec& scene, int object_id);

struct Expression {
    std::string text;
    int object_id = 0;
};

// All template instantiations that uniquely resolve to `object_id`.
std::vector<std::string> unique_expressions_for_object(const SceneSpec& scene, int object_id, TemplateMode mode);
// 2-4 expressions per object, drawn deterministically from rng.
std::vector<Expression> expressions_for_scene(const SceneSpec& scene, TemplateMode mode, Rng& rng);

struct AmbiguityError : std::runtime_error {
    explicit AmbiguityError(const std::string& what) : std::runtime_error(what) {}
};

// Attribute-filter evaluation over the scene; throws AmbiguityError on 0 or
// >= 2 matches. Returns the object id.
int resolve_expression_bruteforce(const SceneSpec& scene, const std::string& expression);

// Closed token set induced by the template grammar.
std::vector<std::string> template_vocabulary();

// Writes scenes/<id>.ppm, masks/<id>_<obj>.pbm, samples.jsonl and vocab.txt.
void generate_dataset(const std::string& out_dir, int n_scenes, std::uint64_t seed, TemplateMode mode);

// Content hash over vocab, sample records and every referenced image/mask.
std::uint64_t hash_dataset_dir(const std::string& dir);

struct DataSample {
    int image_id = 0, object_id = 0, expression_id = 0;
    std::string text;
    std::vector<int> token_ids;
    int image_ref = 0;  // index into Dataset images
    int mask_ref = 0;   // index into Dataset masks
};

class Dataset {
public:
    static Dataset load(const std::string& dir);

    const std::vector<DataSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    const Vocabulary& vocab() const { return vocab_; }
    int image_h() const { return image_h_; }
    int image_w() const { return image_w_; }

    const Tensor& image(const DataSample& s) const { return images_[static_cast<std::size_t>(s.image_ref)]; }
    const ByteMask& mask(const DataSample& s) const { return masks_[static_cast<std::size_t>(s.mask_ref)]; }
    Tensor mask_tensor(const DataSample& s) const { return mask_to_tensor(mask(s)); }

    // Sample indices grouped for batch construction; deterministic order.
    const std::vector<int>& of_object(int image_id, int object_id) const;
    const std::vector<int>& of_image(int image_id) const;

private:
    std::vector<DataSample> samples_;
    std::vector<Tensor> images_;
    std::vector<ByteMask> masks_;
    Vocabulary vocab_;
    int image_h_ = 0, image_w_ = 0;
    std::map<std::pair<int, int>, std::vector<int>> by_object_;
    std::map<int, std::vector<int>> by_image_;
};

}  // namespace vlt
