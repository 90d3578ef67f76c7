#include <doctest.h>

#include <cmath>
#include <limits>

#include "fsskit/kernels.hpp"
#include "fsskit/ref/reference.hpp"
#include "fsskit/rng.hpp"

using namespace fsskit;

namespace {

const float kNegInf = -std::numeric_limits<float>::infinity();

Tensor random_tensor(Rng& rng, Shape shape, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

BinaryMask random_mask(Rng& rng, std::size_t h, std::size_t w, double p = 0.5) {
    BinaryMask m(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.set(y, x, rng.uniform() < p);
    return m;
}

}  // namespace

TEST_CASE("shape rejects zero extents and overflow") {
    CHECK_THROWS_AS(Shape({0, 3}), DimensionError);
    CHECK_THROWS_AS(Shape({std::numeric_limits<std::size_t>::max(), 16}),
                    DimensionError);
    CHECK(Shape({2, 3, 4}).numel() == 24);
}

TEST_CASE("tensor validates data length") {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), DimensionError);
    CHECK_THROWS_AS(BinaryMask(2, 2, {0, 1, 2, 0}), InvariantError);
}

TEST_CASE("elementwise_mul: identity times mask") {
    Tensor a(Shape{2, 2, 2}, std::vector<float>(8, 1.0f));
    BinaryMask m(2, 2, {1, 0, 0, 1});
    Tensor out = elementwise_mul(a, m);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(out(c, 0, 0) == 1.0f);
        CHECK(out(c, 0, 1) == 0.0f);
        CHECK(out(c, 1, 0) == 0.0f);
        CHECK(out(c, 1, 1) == 1.0f);
    }
}

TEST_CASE("elementwise_mul: all-zero mask annihilates") {
    Rng rng(3);
    Tensor a = random_tensor(rng, Shape{3, 4, 4});
    Tensor out = elementwise_mul(a, BinaryMask(4, 4));
    for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("elementwise_mul: seeded cases match the naive loop oracle") {
    for (int k = 0; k < 20; ++k) {
        Rng rng(derive_seed(11, k));
        Tensor a = random_tensor(rng, Shape{3, 4, 4});
        BinaryMask m = random_mask(rng, 4, 4);
        Tensor got = elementwise_mul(a, m);
        const std::vector<double> want = ref::elementwise_mul_mask(a, m);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.data()[i] == static_cast<float>(want[i]));  // exact: x*1 or 0

        Tensor b = random_tensor(rng, Shape{3, 4, 4});
        Tensor got2 = elementwise_mul(a, b);
        const std::vector<double> want2 = ref::elementwise_mul(a, b);
        for (std::size_t i = 0; i < got2.size(); ++i)
            CHECK(std::fabs(got2.data()[i] - want2[i]) <= 1e-6);
    }
}

TEST_CASE("elementwise_mul: dimension error names both shapes") {
    Tensor a(Shape{2, 2, 2});
    Tensor b(Shape{2, 3, 2});
    try {
        elementwise_mul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x2x2]") != std::string::npos);
        CHECK(msg.find("[2x3x2]") != std::string::npos);
    }
}

TEST_CASE("channel_concat: block order and counts") {
    Rng rng(5);
    Tensor a = random_tensor(rng, Shape{3, 2, 2});
    Tensor b = random_tensor(rng, Shape{1, 2, 2});
    const Tensor parts[] = {a, b};
    Tensor out = channel_concat(parts);
    REQUIRE(out.shape() == Shape{4, 2, 2});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out.data()[i] == a.data()[i]);
    for (std::size_t i = 0; i < b.size(); ++i)
        CHECK(out.data()[a.size() + i] == b.data()[i]);

    const Tensor single[] = {a};
    Tensor same = channel_concat(single);
    CHECK(same.data() == a.data());
}

TEST_CASE("channel_concat: the fusion stack is 3c+1 channels") {
    const std::size_t c = 5;
    Tensor x1(Shape{c, 3, 3}), xp(Shape{c, 3, 3}), xc(Shape{c, 3, 3}), p(Shape{1, 3, 3});
    const Tensor parts[] = {x1, xp, xc, p};
    CHECK(channel_concat(parts).dim(0) == 3 * c + 1);
}

TEST_CASE("channel_concat: spatial mismatch") {
    const Tensor parts[] = {Tensor(Shape{1, 2, 2}), Tensor(Shape{1, 3, 2})};
    CHECK_THROWS_AS(channel_concat(parts), DimensionError);
}

TEST_CASE("conv1x1: identity block selects the first channels") {
    Rng rng(7);
    Tensor x = random_tensor(rng, Shape{4, 3, 3});
    Tensor w(Shape{2, 4});
    w(std::size_t{0}, std::size_t{0}) = 1.0f;
    w(std::size_t{1}, std::size_t{1}) = 1.0f;
    Tensor out = conv1x1(x, w, {});
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t y = 0; y < 3; ++y)
            for (std::size_t xx = 0; xx < 3; ++xx)
                CHECK(out(ch, y, xx) == x(ch, y, xx));
}

TEST_CASE("conv1x1: zero weights yield the bias map") {
    Tensor x(Shape{3, 2, 2});
    Tensor w(Shape{2, 3});
    const std::vector<float> bias = {0.25f, -1.5f};
    Tensor out = conv1x1(x, w, bias);
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t xx = 0; xx < 2; ++xx) {
            CHECK(out(std::size_t{0}, y, xx) == 0.25f);
            CHECK(out(std::size_t{1}, y, xx) == -1.5f);
        }
}

TEST_CASE("conv1x1: seeded 4->2 cases match the naive oracle") {
    for (int k = 0; k < 20; ++k) {
        Rng rng(derive_seed(13, k));
        Tensor x = random_tensor(rng, Shape{4, 5, 5});
        Tensor w = random_tensor(rng, Shape{2, 4});
        std::vector<float> bias = {static_cast<float>(rng.uniform(-1, 1)),
                                   static_cast<float>(rng.uniform(-1, 1))};
        Tensor got = conv1x1(x, w, bias);
        const std::vector<double> want = ref::conv1x1(x, w, bias);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got.data()[i] - want[i]) <= 1e-6);
    }
    CHECK_THROWS_AS(conv1x1(Tensor(Shape{3, 2, 2}), Tensor(Shape{2, 4}), {}),
                    DimensionError);
}

TEST_CASE("row_softmax: symmetric row") {
    Tensor a(Shape{1, 2});
    Tensor out = row_softmax(a);
    CHECK(out(std::size_t{0}, std::size_t{0}) == 0.5f);
    CHECK(out(std::size_t{0}, std::size_t{1}) == 0.5f);
}

TEST_CASE("row_softmax: mask annihilation for any finite x") {
    for (float x : {-40.0f, -1.0f, 0.0f, 3.5f, 80.0f}) {
        Tensor a(Shape{1, 2});
        a(std::size_t{0}, std::size_t{0}) = x;
        a(std::size_t{0}, std::size_t{1}) = kNegInf;
        Tensor out = row_softmax(a);
        CHECK(out(std::size_t{0}, std::size_t{0}) == 1.0f);
        CHECK(out(std::size_t{0}, std::size_t{1}) == 0.0f);
    }
}

TEST_CASE("row_softmax: hand-computed ln row") {
    Tensor a(Shape{1, 2});
    a(std::size_t{0}, std::size_t{0}) = std::log(1.0f);
    a(std::size_t{0}, std::size_t{1}) = std::log(3.0f);
    Tensor out = row_softmax(a);
    CHECK(std::fabs(out(std::size_t{0}, std::size_t{0}) - 0.25f) <= 1e-6);
    CHECK(std::fabs(out(std::size_t{0}, std::size_t{1}) - 0.75f) <= 1e-6);
}

TEST_CASE("row_softmax: fully masked row throws, never silently uniform") {
    Tensor a(Shape{2, 2});
    a(std::size_t{1}, std::size_t{0}) = kNegInf;
    a(std::size_t{1}, std::size_t{1}) = kNegInf;
    CHECK_THROWS_AS(row_softmax(a), DegenerateRowError);
}

TEST_CASE("row_softmax: rows are stochastic and masked cells exactly zero") {
    Rng rng(17);
    Tensor a = random_tensor(rng, Shape{8, 9}, -5.0f, 5.0f);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c)
            if (rng.uniform() < 0.3) a(r, c) = kNegInf;
    Tensor out = row_softmax(a);
    for (std::size_t r = 0; r < 8; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 9; ++c) {
            if (a(r, c) == kNegInf) CHECK(out(r, c) == 0.0f);
            sum += out(r, c);
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-6);
    }
}

TEST_CASE("resize_bilinear: identity is bit-identical") {
    Rng rng(19);
    Tensor x = random_tensor(rng, Shape{2, 3, 5});
    Tensor out = resize_bilinear(x, 3, 5);
    CHECK(out.data() == x.data());
}

TEST_CASE("resize_bilinear: 1x1 input broadcasts its value") {
    Tensor x(Shape{1, 1, 1}, {0.37f});
    Tensor out = resize_bilinear(x, 4, 3);
    for (float v : out.data()) CHECK(v == 0.37f);
}

TEST_CASE("resize_bilinear: 2x2 -> 4x4 matches the per-pixel oracle") {
    for (int k = 0; k < 20; ++k) {
        Rng rng(derive_seed(23, k));
        Tensor x = random_tensor(rng, Shape{1, 2, 2});
        Tensor got = resize_bilinear(x, 4, 4);
        const std::vector<double> want = ref::resize_bilinear(x, 4, 4);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got.data()[i] - want[i]) <= 1e-6);
    }
}

TEST_CASE("masked_minmax_normalize: endpoints, degenerate rule, empty region") {
    Tensor v(Shape{1, 1, 2}, {0.2f, 0.6f});
    Tensor out = masked_minmax_normalize(v, BinaryMask::ones(1, 2));
    CHECK(out.data()[0] == 0.0f);
    CHECK(out.data()[1] == 1.0f);

    Tensor c(Shape{1, 1, 3}, {0.9f, 0.9f, 0.9f});
    BinaryMask region(1, 3, {1, 1, 0});
    Tensor out2 = masked_minmax_normalize(c, region);
    CHECK(out2.data()[0] == 0.5f);
    CHECK(out2.data()[1] == 0.5f);
    CHECK(out2.data()[2] == 0.0f);  // inactive forced to zero

    Tensor out3 = masked_minmax_normalize(c, BinaryMask(1, 3));
    for (float x : out3.data()) CHECK(x == 0.0f);
}

TEST_CASE("masked_minmax_normalize: seeded 8x8 equals the naive scan oracle") {
    for (int k = 0; k < 20; ++k) {
        Rng rng(derive_seed(29, k));
        Tensor v = random_tensor(rng, Shape{1, 8, 8});
        BinaryMask region = random_mask(rng, 8, 8, 0.4);
        Tensor got = masked_minmax_normalize(v, region);
        const std::vector<double> want = ref::masked_minmax_normalize(v, region);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got.data()[i] == static_cast<float>(want[i]));
            CHECK(got.data()[i] >= 0.0f);
            CHECK(got.data()[i] <= 1.0f);
            if (!region.flat(i)) CHECK(got.data()[i] == 0.0f);
        }
    }
}

TEST_CASE("kernels are deterministic across repeat runs") {
    Rng rng(31);
    Tensor x = random_tensor(rng, Shape{6, 12, 12});
    Tensor w = random_tensor(rng, Shape{6, 6});
    Tensor a = conv1x1(x, w, {});
    Tensor b = conv1x1(x, w, {});
    CHECK(a.data() == b.data());
}
