#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vlt/fusion.hpp"
#include "vlt/ops.hpp"

using namespace vlt;

namespace {

Config sdf_config(int dim) {
    Config cfg;
    cfg.dim = dim;
    cfg.fusion = FusionKind::Sdf;
    return cfg;
}

void fill(Tensor t, double v) { std::fill(t.values().begin(), t.values().end(), v); }

LanguageFeatures make_lang(Rng& rng, int nt, int length, int dim) {
    LanguageFeatures lf;
    std::vector<double> rows(static_cast<std::size_t>(nt) * dim, 0.0);
    for (int r = 0; r < length; ++r) {
        for (int c = 0; c < dim; ++c) rows[static_cast<std::size_t>(r) * dim + c] = rng.uniform(-1.0, 1.0);
    }
    lf.f_t = Tensor::from_data({nt, dim}, std::move(rows));
    lf.sentence = oracle::rand_tensor(rng, {1, dim});
    lf.length = length;
    lf.pad_mask.assign(static_cast<std::size_t>(nt), 0);
    for (int r = 0; r < length; ++r) lf.pad_mask[static_cast<std::size_t>(r)] = 1;
    return lf;
}

}  // namespace

TEST_CASE("sdf attention: single valid word gets weight one everywhere") {
    Rng rng(5);
    Fusion fusion(rng, sdf_config(8));
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});
    LanguageFeatures lang = make_lang(rng, 4, 1, 8);
    Tensor a = fusion.sdf_attention(f_vr, lang.f_t, lang.pad_mask);
    CHECK(a.shape() == Shape{2, 2, 4});
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            CHECK(a.at({y, x, 0}) == 1.0);
            for (int w = 1; w < 4; ++w) CHECK(a.at({y, x, w}) == 0.0);
        }
    }
}

TEST_CASE("sdf attention: zero projections give uniform weights over valid words") {
    Rng rng(7);
    Fusion fusion(rng, sdf_config(8));
    ParamRegistry reg;
    fusion.register_params(reg, "f");
    fill(reg.find("f.attn_vision.weight"), 0.0);
    fill(reg.find("f.attn_text.weight"), 0.0);

    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});
    LanguageFeatures lang = make_lang(rng, 5, 3, 8);
    Tensor a = fusion.sdf_attention(f_vr, lang.f_t, lang.pad_mask);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            for (int w = 0; w < 3; ++w) CHECK(a.at({y, x, w}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
            for (int w = 3; w < 5; ++w) CHECK(a.at({y, x, w}) == 0.0);
        }
    }
}

TEST_CASE("sdf attention: all words padded is an error") {
    Rng rng(9);
    Fusion fusion(rng, sdf_config(8));
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});
    LanguageFeatures lang = make_lang(rng, 4, 1, 8);
    std::vector<unsigned char> none(4, 0);
    CHECK_THROWS_AS(fusion.sdf_attention(f_vr, lang.f_t, none), std::invalid_argument);
}

TEST_CASE("sdf attention and fusion match the per-pixel loop oracle") {
    Rng rng(11);
    const int dim = 8, nt = 3;
    Fusion fusion(rng, sdf_config(dim));
    ParamRegistry reg;
    fusion.register_params(reg, "f");

    for (int it = 0; it < 30; ++it) {
        Tensor f_vr = oracle::rand_tensor(rng, {2, 2, dim});
        LanguageFeatures lang = make_lang(rng, nt, rng.uniform_int(1, nt), dim);
        Tensor a = fusion.sdf_attention(f_vr, lang.f_t, lang.pad_mask);

        const auto expect = oracle::sdf_attention(
            f_vr.values(), lang.f_t.values(), reg.find("f.attn_vision.weight").values(),
            reg.find("f.attn_vision.bias").values(), reg.find("f.attn_text.weight").values(),
            reg.find("f.attn_text.bias").values(), 4, dim, nt, lang.pad_mask);
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(a.values()[i] == doctest::Approx(expect[i]).epsilon(1e-9));
        }

        // Eq. 2-3 extension: weighted language values, concat, projection.
        Tensor fused = fusion.sdf_fuse(a, lang.f_t, f_vr);
        const auto& wt2 = reg.find("f.value_text.weight").values();
        const auto& bt2 = reg.find("f.value_text.bias").values();
        const auto& wo = reg.find("f.out_proj.weight").values();
        const auto& bo = reg.find("f.out_proj.bias").values();
        for (int p = 0; p < 4; ++p) {
            std::vector<double> sdl(static_cast<std::size_t>(dim), 0.0);
            for (int w = 0; w < nt; ++w) {
                const auto val = oracle::affine_row(oracle::slice_row(lang.f_t.values(), w, dim), wt2, bt2, dim, dim);
                for (int c = 0; c < dim; ++c) sdl[static_cast<std::size_t>(c)] += expect[static_cast<std::size_t>(p) * nt + w] * val[static_cast<std::size_t>(c)];
            }
            std::vector<double> joint = sdl;
            const auto vis = oracle::slice_row(f_vr.values(), p, dim);
            joint.insert(joint.end(), vis.begin(), vis.end());
            const auto out_row = oracle::affine_row(joint, wo, bo, 2 * dim, dim);
            for (int c = 0; c < dim; ++c) {
                CHECK(fused.values()[static_cast<std::size_t>(p) * dim + c] ==
                      doctest::Approx(out_row[static_cast<std::size_t>(c)]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("one-hot attention selects a single language value row") {
    Rng rng(13);
    const int dim = 8, nt = 3;
    Fusion fusion(rng, sdf_config(dim));
    ParamRegistry reg;
    fusion.register_params(reg, "f");
    LanguageFeatures lang = make_lang(rng, nt, nt, dim);
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, dim});

    std::vector<double> onehot(4 * nt, 0.0);
    for (int p = 0; p < 4; ++p) onehot[static_cast<std::size_t>(p) * nt + 1] = 1.0;  // word 1 everywhere
    Tensor fused = fusion.sdf_fuse(Tensor::from_data({2, 2, nt}, onehot), lang.f_t, f_vr);

    const auto val = oracle::affine_row(oracle::slice_row(lang.f_t.values(), 1, dim),
                                        reg.find("f.value_text.weight").values(),
                                        reg.find("f.value_text.bias").values(), dim, dim);
    for (int p = 0; p < 4; ++p) {
        std::vector<double> joint = val;
        const auto vis = oracle::slice_row(f_vr.values(), p, dim);
        joint.insert(joint.end(), vis.begin(), vis.end());
        const auto expect = oracle::affine_row(joint, reg.find("f.out_proj.weight").values(),
                                               reg.find("f.out_proj.bias").values(), 2 * dim, dim);
        for (int c = 0; c < dim; ++c) {
            CHECK(fused.values()[static_cast<std::size_t>(p) * dim + c] ==
                  doctest::Approx(expect[static_cast<std::size_t>(c)]).epsilon(1e-9));
        }
    }

    // two pixels with different one-hot rows yield different fused rows
    std::vector<double> mixed(4 * nt, 0.0);
    mixed[0 * nt + 0] = 1.0;
    mixed[1 * nt + 2] = 1.0;
    mixed[2 * nt + 0] = 1.0;
    mixed[3 * nt + 2] = 1.0;
    Tensor fused2 = fusion.sdf_fuse(Tensor::from_data({2, 2, nt}, mixed), lang.f_t, f_vr);
    double diff = 0.0;
    for (int c = 0; c < dim; ++c) diff = std::max(diff, std::abs(fused2.at({0, 0, c}) - fused2.at({0, 1, c})));
    CHECK(diff > 1e-8);
}

TEST_CASE("tile fuse copies one language vector to every position") {
    Rng rng(15);
    Config cfg = sdf_config(8);
    cfg.fusion = FusionKind::Tile;
    Fusion fusion(rng, cfg);
    LanguageFeatures lang = make_lang(rng, 4, 2, 8);
    // constant vision rows isolate the tiled language contribution
    Tensor f_vr = reshape(broadcast_to(oracle::rand_tensor(rng, {1, 8}), {4, 8}), {2, 2, 8});
    Tensor fused = fusion.tile_fuse(lang.sentence, f_vr);
    CHECK(fused.shape() == Shape{2, 2, 8});
    for (int p = 1; p < 4; ++p) {
        for (int c = 0; c < 8; ++c) {
            CHECK(fused.values()[static_cast<std::size_t>(p) * 8 + c] ==
                  doctest::Approx(fused.values()[static_cast<std::size_t>(c)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("with identical projection weights, tile and sdf differ on non-uniform attention") {
    Rng rng(17);
    Config sdf_cfg = sdf_config(8);
    Fusion sdf(rng, sdf_cfg);
    Config tile_cfg = sdf_config(8);
    tile_cfg.fusion = FusionKind::Tile;
    Fusion tile(rng, tile_cfg);

    ParamRegistry sdf_reg, tile_reg;
    sdf.register_params(sdf_reg, "s");
    tile.register_params(tile_reg, "t");
    Tensor tile_w = tile_reg.find("t.out_proj.weight");
    Tensor tile_b = tile_reg.find("t.out_proj.bias");
    tile_w.values() = sdf_reg.find("s.out_proj.weight").values();
    tile_b.values() = sdf_reg.find("s.out_proj.bias").values();

    LanguageFeatures lang = make_lang(rng, 4, 3, 8);
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});
    Tensor a = sdf.sdf_attention(f_vr, lang.f_t, lang.pad_mask);

    // attention must be non-uniform somewhere for the comparison to be meaningful
    double spread = 0.0;
    for (int p = 0; p < 4; ++p) {
        for (int w = 0; w < 3; ++w) {
            spread = std::max(spread, std::abs(a.values()[static_cast<std::size_t>(p) * 4 + w] - 1.0 / 3.0));
        }
    }
    CHECK(spread > 1e-6);

    Tensor fused_sdf = sdf.sdf_fuse(a, lang.f_t, f_vr);
    Tensor fused_tile = tile.tile_fuse(lang.sentence, f_vr);
    double diff = 0.0;
    for (std::size_t i = 0; i < fused_sdf.numel(); ++i) {
        diff = std::max(diff, std::abs(fused_sdf.values()[i] - fused_tile.values()[i]));
    }
    CHECK(diff > 1e-8);
}

TEST_CASE("sdf fusion is equivariant to spatial permutation") {
    Rng rng(19);
    Fusion fusion(rng, sdf_config(8));
    LanguageFeatures lang = make_lang(rng, 4, 3, 8);
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});

    std::vector<int> perm = {2, 0, 3, 1};
    std::vector<double> permuted(f_vr.numel());
    for (int p = 0; p < 4; ++p) {
        for (int c = 0; c < 8; ++c) {
            permuted[static_cast<std::size_t>(p) * 8 + c] = f_vr.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)]) * 8 + c];
        }
    }
    FusionResult base = fusion.forward(f_vr, lang);
    FusionResult moved = fusion.forward(Tensor::from_data({2, 2, 8}, std::move(permuted)), lang);
    for (int p = 0; p < 4; ++p) {
        for (int c = 0; c < 8; ++c) {
            CHECK(moved.f_fused.values()[static_cast<std::size_t>(p) * 8 + c] ==
                  doctest::Approx(base.f_fused.values()[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)]) * 8 + c])
                      .epsilon(1e-9));
        }
    }
}

TEST_CASE("gradient flows to both language and vision inputs") {
    Rng rng(21);
    Fusion fusion(rng, sdf_config(8));
    LanguageFeatures lang = make_lang(rng, 4, 3, 8);
    lang.f_t.set_requires_grad(true);
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8}, -1.0, 1.0, true);

    Tape tape;
    TapeScope scope(tape);
    FusionResult res = fusion.forward(f_vr, lang);
    tape.backward(sum(mul(res.f_fused, res.f_fused)));

    double gt = 0.0, gv = 0.0;
    for (double g : lang.f_t.grad()) gt += std::abs(g);
    for (double g : f_vr.grad()) gv += std::abs(g);
    CHECK(gt > 0.0);
    CHECK(gv > 0.0);
}

TEST_CASE("tile_conv4 applies the extra convolution stack") {
    Rng rng(23);
    Config cfg = sdf_config(8);
    cfg.fusion = FusionKind::TileConv4;
    Fusion fusion(rng, cfg);
    ParamRegistry reg;
    fusion.register_params(reg, "f");
    CHECK(reg.contains("f.conv3.weight"));
    LanguageFeatures lang = make_lang(rng, 4, 2, 8);
    Tensor f_vr = oracle::rand_tensor(rng, {2, 2, 8});
    CHECK(fusion.forward(f_vr, lang).f_fused.shape() == Shape{2, 2, 8});
}
