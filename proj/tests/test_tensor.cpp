#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vlt/ops.hpp"

using namespace vlt;

TEST_CASE("matmul identity and hand examples") {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor x = Tensor::from_data({2, 2}, {3, -1, 2, 7});
    CHECK(matmul(eye, x).values() == x.values());

    // [[1,2],[3,4]] x [[5],[6]] = [[17],[39]], confirmed by the triple-loop oracle
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {5, 6});
    Tensor c = matmul(a, b);
    CHECK(c.at({0, 0}) == 17.0);
    CHECK(c.at({1, 0}) == 39.0);
    CHECK(c.values() == oracle::matmul(a.values(), b.values(), 2, 2, 1));

    Tensor zero = Tensor::zeros({2, 2});
    CHECK(matmul(zero, x).values() == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("matmul agrees bitwise with the naive oracle on small shapes") {
    Rng rng(7);
    for (int it = 0; it < 100; ++it) {
        const int m = rng.uniform_int(1, 8), k = rng.uniform_int(1, 8), n = rng.uniform_int(1, 8);
        Tensor a = oracle::rand_tensor(rng, {m, k});
        Tensor b = oracle::rand_tensor(rng, {k, n});
        CHECK(matmul(a, b).values() == oracle::matmul(a.values(), b.values(), m, k, n));
    }
}

TEST_CASE("matmul shape mismatch reports both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[4, 2]") != std::string::npos);
    }
}

TEST_CASE("softmax basics") {
    CHECK(softmax(Tensor::from_data({1}, {4.2}), 0).value() == 1.0);

    Tensor t = softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
    for (int i = 0; i < 3; ++i) CHECK(t.at({i}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Max subtraction makes large logits exact: [1000, 1001] -> [1/(1+e), e/(1+e)]
    Tensor big = softmax(Tensor::from_data({2}, {1000, 1001}), 0);
    const auto expect = oracle::softmax({1000, 1001});
    CHECK(big.at({0}) == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(big.at({1}) == doctest::Approx(expect[1]).epsilon(1e-12));
    CHECK(big.at({0}) == doctest::Approx(0.2689414213699951).epsilon(1e-9));
    CHECK(big.at({1}) == doctest::Approx(0.7310585786300049).epsilon(1e-9));

    CHECK_THROWS_AS(softmax(Tensor::zeros({3}), 1), std::invalid_argument);
}

TEST_CASE("softmax slices are probability vectors") {
    Rng rng(11);
    for (int it = 0; it < 50; ++it) {
        const int rows = rng.uniform_int(1, 6), cols = rng.uniform_int(1, 6);
        Tensor x = oracle::rand_tensor(rng, {rows, cols}, -30.0, 30.0);
        Tensor y = softmax(x, 1);
        for (int r = 0; r < rows; ++r) {
            double total = 0.0;
            for (int c = 0; c < cols; ++c) {
                CHECK(y.at({r, c}) >= 0.0);
                total += y.at({r, c});
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("masked softmax zeroes invalid positions and rejects empty masks") {
    Tensor x = Tensor::from_data({2, 3}, {5, 1, 2, -3, 0, 9});
    std::vector<unsigned char> mask = {1, 0, 1};
    Tensor y = softmax_masked(x, 1, mask);
    for (int r = 0; r < 2; ++r) {
        CHECK(y.at({r, 1}) == 0.0);
        CHECK(y.at({r, 0}) + y.at({r, 2}) == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(softmax_masked(x, 1, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("elementwise suite basics") {
    CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
    CHECK(relu(Tensor::scalar(-3.0)).value() == 0.0);
    CHECK(relu(Tensor::scalar(3.0)).value() == 3.0);
    Tensor joined = concat({Tensor::from_data({2}, {1, 2}), Tensor::from_data({1}, {3})}, 0);
    CHECK(joined.values() == std::vector<double>{1, 2, 3});

    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), std::invalid_argument);
    CHECK_THROWS_AS(broadcast_to(Tensor::zeros({3}), {2, 4}), std::invalid_argument);

    // broadcast: trailing alignment, size-1 expansion
    Tensor row = Tensor::from_data({1, 3}, {1, 2, 3});
    Tensor col = Tensor::from_data({2, 1}, {10, 20});
    Tensor s = add(row, col);
    CHECK(s.shape() == Shape{2, 3});
    CHECK(s.at({1, 2}) == 23.0);
}

TEST_CASE("non-finite results are a checked error") {
    CHECK_THROWS_AS(log(Tensor::zeros({2})), std::runtime_error);
    CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), std::runtime_error);
}

TEST_CASE("tensor construction validates shape") {
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({0, 2}), std::invalid_argument);
}

TEST_CASE("node ids follow creation order") {
    Tensor a = Tensor::zeros({1});
    Tensor b = Tensor::zeros({1});
    Tensor c = add(a, b);
    CHECK(a.node_id() < b.node_id());
    CHECK(b.node_id() < c.node_id());
}

TEST_CASE("backward: analytic examples") {
    // loss = sum(x^2), x = [1,2] -> grad [2,4]
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sum(mul(x, x)));
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));

    // loss = sigmoid(w . x) at w = 0 -> grad = 0.25 x
    Tensor w = Tensor::zeros({1, 3}, true);
    Tensor v = Tensor::from_data({3, 1}, {0.5, -1.0, 2.0});
    {
        Tape tape;
        TapeScope scope(tape);
        tape.backward(sigmoid(matmul(w, v)));
    }
    for (int i = 0; i < 3; ++i) CHECK(w.grad()[static_cast<std::size_t>(i)] == doctest::Approx(0.25 * v.at({i, 0})).epsilon(1e-12));
}

TEST_CASE("backward errors") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // not scalar
    }
    Tensor unconnected = Tensor::scalar(1.0);
    CHECK_THROWS_AS(tape.backward(unconnected), std::invalid_argument);
}

TEST_CASE("a tensor used twice accumulates both path gradients") {
    Tensor x = Tensor::from_data({1}, {3.0}, true);
    {
        Tape tape;
        TapeScope scope(tape);
        // loss = x*x + 2x -> dloss/dx = 2x + 2 = 8
        tape.backward(add(mul(x, x), scale(x, 2.0)));
    }
    CHECK(x.grad()[0] == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("gradient check: randomized graphs over the op suite") {
    Rng rng(23);
    for (int it = 0; it < 8; ++it) {
        Tensor a = oracle::rand_tensor(rng, {3, 4}, -1.0, 1.0, true);
        Tensor b = oracle::rand_tensor(rng, {4, 3}, -1.0, 1.0, true);
        Tensor c = oracle::rand_tensor(rng, {3}, 0.2, 1.5, true);
        auto loss = [&]() {
            Tensor h = tanh(matmul(a, b));                       // [3,3]
            h = add(h, c);                                       // broadcast add
            h = mul(sigmoid(h), softmax(h, 1));
            Tensor pooled = mean(h, 1);                          // [3]
            Tensor mixed = concat({pooled, exp(scale(pooled, 0.5))}, 0);
            Tensor safe = log(add_scalar(mul(mixed, mixed), 1.0));
            return sum(mul(safe, safe));
        };
        const auto rep = oracle::finite_diff_check({a, b, c}, loss);
        CHECK(rep.all_pass());
    }
}

TEST_CASE("gradient check: structural ops") {
    Rng rng(29);
    Tensor x = oracle::rand_tensor(rng, {4, 6}, -1.0, 1.0, true);
    auto loss = [&]() {
        Tensor t = transpose(x);                        // [6,4]
        Tensor r = reshape(t, {8, 3});
        Tensor s = slice(r, 0, 2, 4);                   // [4,3]
        Tensor g = gather_rows(s, {0, 0, 3});           // duplicate row use
        Tensor b = broadcast_to(mean(g, 1, true), {3, 3});
        return sum(mul(add(g, b), sub(g, b)));
    };
    CHECK(oracle::finite_diff_check({x}, loss).all_pass());
}

TEST_CASE("gradient check: conv2d, resize and reductions") {
    Rng rng(31);
    Tensor img = oracle::rand_tensor(rng, {6, 6, 2}, -1.0, 1.0, true);
    Tensor w = oracle::rand_tensor(rng, {3, 3, 2, 3}, -0.5, 0.5, true);
    Tensor bias = oracle::rand_tensor(rng, {3}, -0.1, 0.1, true);
    auto loss = [&]() {
        Tensor y = conv2d(img, w, bias, 2);             // [3,3,3]
        y = resize_nearest(relu(y), 6, 6);
        return mean(mul(y, y));
    };
    CHECK(oracle::finite_diff_check({img, w, bias}, loss).all_pass());
}

TEST_CASE("gradient check: masked softmax and division") {
    Rng rng(37);
    Tensor x = oracle::rand_tensor(rng, {3, 5}, -2.0, 2.0, true);
    std::vector<unsigned char> mask = {1, 1, 0, 1, 0};
    auto loss = [&]() {
        Tensor p = softmax_masked(x, 1, mask);
        Tensor d = div(add_scalar(p, 0.5), add_scalar(sigmoid(x), 0.5));
        return sum(mul(d, p));
    };
    CHECK(oracle::finite_diff_check({x}, loss).all_pass());
}

TEST_CASE("bce_with_logits") {
    // zero logits give ln 2 regardless of the target
    Tensor logits = Tensor::zeros({2, 2});
    Tensor target = Tensor::from_data({2, 2}, {1, 0, 1, 1});
    CHECK(bce_with_logits(logits, target).value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // confident correct predictions drive the loss to ~0
    Tensor strong = Tensor::from_data({2, 2}, {20, -20, 20, 20});
    CHECK(bce_with_logits(strong, target).value() < 1e-8);

    // mixed 2x2 case against a long-double evaluation
    Tensor mixed = Tensor::from_data({2, 2}, {0.3, -1.2, 2.0, -0.4});
    Tensor tgt = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    long double expect = 0.0L;
    const double xs[4] = {0.3, -1.2, 2.0, -0.4};
    const double ts[4] = {1, 0, 0, 1};
    for (int i = 0; i < 4; ++i) {
        const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(xs[i])));
        expect += -(ts[i] * std::log(p) + (1.0L - ts[i]) * std::log(1.0L - p));
    }
    expect /= 4.0L;
    CHECK(bce_with_logits(mixed, tgt).value() == doctest::Approx(static_cast<double>(expect)).epsilon(1e-9));

    CHECK_THROWS_AS(bce_with_logits(logits, Tensor::from_data({2, 2}, {0.5, 0, 1, 1})), std::invalid_argument);

    Rng rng(41);
    Tensor lg = oracle::rand_tensor(rng, {3, 3}, -2.0, 2.0, true);
    Tensor tg = Tensor::from_data({3, 3}, {1, 0, 1, 0, 0, 1, 1, 1, 0});
    auto loss = [&]() { return bce_with_logits(lg, tg); };
    CHECK(oracle::finite_diff_check({lg}, loss).all_pass());
}

TEST_CASE("reductions and transpose semantics") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(sum(x).value() == 21.0);
    CHECK(mean(x).value() == 3.5);
    CHECK(sum(x, 0).values() == std::vector<double>{5, 7, 9});
    CHECK(mean(x, 1).values() == std::vector<double>{2, 5});
    CHECK(sum(x, 1, true).shape() == Shape{2, 1});
    CHECK(transpose(x).values() == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK_THROWS_AS(sum(x, 2), std::invalid_argument);
}
