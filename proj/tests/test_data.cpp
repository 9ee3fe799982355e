#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "vlt/data.hpp"

using namespace vlt;

namespace {

SceneObject make_object(int id, ObjShape shape, int color, ObjSize size, int cell) {
    SceneObject o;
    o.id = id;
    o.shape = shape;
    o.color = color;
    o.size = size;
    o.cell = cell;
    o.radius = size == ObjSize::Small ? 5.0 : 9.0;
    const int col = cell % 3, row = cell / 3;
    o.cx = (col + 0.5) * (64.0 / 3.0);
    o.cy = (row + 0.5) * (64.0 / 3.0);
    return o;
}

SceneSpec two_circle_scene() {
    SceneSpec scene;
    scene.id = 0;
    scene.image_size = 64;
    scene.objects = {make_object(0, ObjShape::Circle, 0, ObjSize::Small, 0),    // red circle
                     make_object(1, ObjShape::Circle, 2, ObjSize::Large, 4)};   // blue circle
    return scene;
}

}  // namespace

TEST_CASE("resolver picks the unique attribute match") {
    const SceneSpec scene = two_circle_scene();
    CHECK(resolve_expression_bruteforce(scene, "the red circle") == 0);
    CHECK(resolve_expression_bruteforce(scene, "the blue circle") == 1);
    CHECK(resolve_expression_bruteforce(scene, "the large circle") == 1);
    CHECK_THROWS_AS(resolve_expression_bruteforce(scene, "the circle"), AmbiguityError);      // two matches
    CHECK_THROWS_AS(resolve_expression_bruteforce(scene, "the red square"), AmbiguityError);  // zero matches
}

TEST_CASE("position and relation clauses resolve structurally") {
    SceneSpec scene;
    scene.image_size = 64;
    scene.objects = {make_object(0, ObjShape::Square, 3, ObjSize::Large, 3),    // yellow square, on the left
                     make_object(1, ObjShape::Square, 1, ObjSize::Large, 5),    // green square, on the right
                     make_object(2, ObjShape::Circle, 0, ObjSize::Small, 1)};   // red circle, at the top
    CHECK(resolve_expression_bruteforce(scene, "the large square on the left") == 0);
    CHECK(resolve_expression_bruteforce(scene, "the yellow square left of the green square") == 0);
    CHECK(resolve_expression_bruteforce(scene, "the red circle above the green square") == 2);
    CHECK_THROWS_AS(resolve_expression_bruteforce(scene, "the large square"), AmbiguityError);

    // two large squares both on the left: the position phrase cannot split them
    SceneSpec twin = scene;
    twin.objects[1] = make_object(1, ObjShape::Square, 1, ObjSize::Large, 3);
    CHECK_THROWS_AS(resolve_expression_bruteforce(twin, "the large square on the left"), AmbiguityError);
}

TEST_CASE("generated scenes satisfy the structural invariants") {
    for (int i = 0; i < 50; ++i) {
        const SceneSpec scene = generate_scene(i, Rng::mix(99, static_cast<std::uint64_t>(i)));
        CHECK(scene.objects.size() >= 2);
        CHECK(scene.objects.size() <= 4);
        std::set<int> cells;
        std::set<std::pair<int, int>> looks;
        for (const SceneObject& o : scene.objects) {
            cells.insert(o.cell);
            looks.insert({static_cast<int>(o.shape), o.color});
            CHECK(o.cx - o.radius >= 0.0);
            CHECK(o.cx + o.radius <= 64.0);
            CHECK(o.cy - o.radius >= 0.0);
            CHECK(o.cy + o.radius <= 64.0);
        }
        CHECK(cells.size() == scene.objects.size());   // distinct cells
        CHECK(looks.size() == scene.objects.size());   // distinct (shape, color)
    }
}

TEST_CASE("circle mask pixel count approximates the analytic area") {
    SceneSpec scene = two_circle_scene();
    for (int id = 0; id < 2; ++id) {
        const ByteMask mask = render_object_mask(scene, id);
        std::size_t count = 0;
        for (unsigned char p : mask.pixels) count += p;
        const double r = scene.objects[static_cast<std::size_t>(id)].radius;
        const double area = M_PI * r * r;
        CHECK(std::abs(static_cast<double>(count) - area) <= 4.0 * r);
    }
}

TEST_CASE("masks are nonempty, in bounds, and disjoint from other objects") {
    for (int i = 0; i < 10; ++i) {
        const SceneSpec scene = generate_scene(i, Rng::mix(7, static_cast<std::uint64_t>(i)));
        std::vector<ByteMask> masks;
        for (const SceneObject& o : scene.objects) masks.push_back(render_object_mask(scene, o.id));
        for (std::size_t a = 0; a < masks.size(); ++a) {
            std::size_t count = 0;
            for (unsigned char p : masks[a].pixels) count += p;
            CHECK(count > 0);
            for (std::size_t b = a + 1; b < masks.size(); ++b) {
                std::size_t overlap = 0;
                for (std::size_t p = 0; p < masks[a].pixels.size(); ++p) {
                    overlap += masks[a].pixels[p] && masks[b].pixels[p];
                }
                CHECK(overlap == 0);
            }
        }
    }
}

TEST_CASE("resolver always agrees with the generator's intended referent") {
    int pairs = 0;
    for (int i = 0; pairs < 1000; ++i) {
        const SceneSpec scene = generate_scene(i, Rng::mix(31337, static_cast<std::uint64_t>(i)));
        Rng rng(Rng::mix(555, static_cast<std::uint64_t>(i)));
        for (const Expression& e : expressions_for_scene(scene, TemplateMode::Mixed, rng)) {
            CHECK(resolve_expression_bruteforce(scene, e.text) == e.object_id);
            ++pairs;
        }
    }
    CHECK(pairs >= 1000);
}

TEST_CASE("template modes control position vocabulary") {
    const SceneSpec scene = generate_scene(0, 123);
    for (int id = 0; id < static_cast<int>(scene.objects.size()); ++id) {
        for (const std::string& text : unique_expressions_for_object(scene, id, TemplateMode::PosFree)) {
            for (const std::string& w : {"left", "right", "top", "bottom", "middle", "above", "below", "at", "on"}) {
                CHECK(text.find(" " + w) == std::string::npos);
            }
        }
        // every rich expression mentions a position or relation
        for (const std::string& text : unique_expressions_for_object(scene, id, TemplateMode::Rich)) {
            bool positional = false;
            for (const std::string& w : {"left", "right", "top", "bottom", "middle", "above", "below"}) {
                positional = positional || text.find(w) != std::string::npos;
            }
            CHECK(positional);
        }
        CHECK(unique_expressions_for_object(scene, id, TemplateMode::PosFree).size() >= 2);
        CHECK(unique_expressions_for_object(scene, id, TemplateMode::Rich).size() >= 2);
    }
}

TEST_CASE("template vocabulary is closed and small") {
    Vocabulary v = Vocabulary::build(template_vocabulary());
    CHECK(v.size() < 64);

    // every expression the generator can emit tokenizes into known words
    for (int i = 0; i < 5; ++i) {
        const SceneSpec scene = generate_scene(i, Rng::mix(17, static_cast<std::uint64_t>(i)));
        Rng rng(Rng::mix(18, static_cast<std::uint64_t>(i)));
        for (const Expression& e : expressions_for_scene(scene, TemplateMode::Mixed, rng)) {
            for (int id : v.encode(e.text)) CHECK(id != v.unk_id());
        }
    }
}

TEST_CASE("image io round-trips") {
    RgbImage img;
    img.h = 3;
    img.w = 5;
    img.pixels.resize(45);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<unsigned char>(i * 7 % 251);
    write_ppm("/tmp/vlt_io_test.ppm", img);
    const RgbImage back = read_ppm("/tmp/vlt_io_test.ppm");
    CHECK(back.h == 3);
    CHECK(back.w == 5);
    CHECK(back.pixels == img.pixels);

    ByteMask mask;
    mask.h = 4;
    mask.w = 11;  // exercises bit packing across byte boundaries
    mask.pixels.assign(44, 0);
    for (std::size_t i = 0; i < mask.pixels.size(); i += 3) mask.pixels[i] = 1;
    write_pbm("/tmp/vlt_io_test.pbm", mask);
    const ByteMask mback = read_pbm("/tmp/vlt_io_test.pbm");
    CHECK(mback.h == 4);
    CHECK(mback.w == 11);
    CHECK(mback.pixels == mask.pixels);
}

TEST_CASE("dataset generation is deterministic for a fixed seed") {
    generate_dataset("/tmp/vlt_ds_a", 4, 2024, TemplateMode::Mixed);
    generate_dataset("/tmp/vlt_ds_b", 4, 2024, TemplateMode::Mixed);
    generate_dataset("/tmp/vlt_ds_c", 4, 2025, TemplateMode::Mixed);
    CHECK(hash_dataset_dir("/tmp/vlt_ds_a") == hash_dataset_dir("/tmp/vlt_ds_b"));
    CHECK(hash_dataset_dir("/tmp/vlt_ds_a") != hash_dataset_dir("/tmp/vlt_ds_c"));
}

TEST_CASE("dataset loads with consistent grouping and tokens") {
    generate_dataset("/tmp/vlt_ds_load", 6, 77, TemplateMode::Mixed);
    const Dataset ds = Dataset::load("/tmp/vlt_ds_load");
    CHECK(ds.size() >= 6u * 2u * 2u);  // >= 2 objects x 2 expressions per scene
    CHECK(ds.image_h() == 64);
    CHECK(ds.image_w() == 64);

    std::set<std::tuple<int, int, int>> ids;
    for (const DataSample& s : ds.samples()) {
        CHECK(ids.insert({s.image_id, s.object_id, s.expression_id}).second);  // identity keys unique
        CHECK_FALSE(s.token_ids.empty());
        for (int id : s.token_ids) CHECK(id != ds.vocab().unk_id());
        const ByteMask& mask = ds.mask(s);
        std::size_t count = 0;
        for (unsigned char p : mask.pixels) count += p;
        CHECK(count > 0);

        // every expression of one object shares that object's mask
        for (int other : ds.of_object(s.image_id, s.object_id)) {
            CHECK(ds.mask(ds.samples()[static_cast<std::size_t>(other)]).pixels == mask.pixels);
        }
    }
    // samples ordered by identity keys
    for (std::size_t i = 1; i < ds.size(); ++i) {
        const DataSample& a = ds.samples()[i - 1];
        const DataSample& b = ds.samples()[i];
        CHECK(std::tie(a.image_id, a.object_id, a.expression_id) < std::tie(b.image_id, b.object_id, b.expression_id));
    }
}

TEST_CASE("sampling supports SISO everywhere: every object has at least two expressions") {
    generate_dataset("/tmp/vlt_ds_siso", 8, 911, TemplateMode::Rich);
    const Dataset ds = Dataset::load("/tmp/vlt_ds_siso");
    std::map<std::pair<int, int>, int> counts;
    for (const DataSample& s : ds.samples()) ++counts[{s.image_id, s.object_id}];
    for (const auto& [key, n] : counts) CHECK(n >= 2);
}
