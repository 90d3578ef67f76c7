#include <doctest.h>

#include <cmath>
#include <limits>

#include "fsskit/attention.hpp"
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

Tensor identity_matrix(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0f;
    return t;
}

ProjectionWeights identity_weights(std::size_t c) {
    ProjectionWeights w;
    w.wq = identity_matrix(c);
    w.wk = identity_matrix(c);
    w.wv = identity_matrix(c);
    return w;
}

AttentionMap map_of(std::vector<float> values, std::size_t rows, std::size_t cols) {
    return AttentionMap{Tensor(Shape{rows, cols}, std::move(values)), true};
}

// flat masks are carried as 1 x n grids
BinaryMask flat_mask(std::vector<std::uint8_t> bits) {
    const std::size_t n = bits.size();
    return BinaryMask(1, n, std::move(bits));
}

}  // namespace

TEST_CASE("cross_attention_scores: single pixel pair is a scaled dot product") {
    const std::size_t c = 4;
    Tensor q(Shape{c, 1, 1}, {1, 2, 3, 4});
    Tensor s(Shape{c, 1, 1}, {-1, 0.5f, 2, 1});
    AttentionMap attn = cross_attention_scores(q, s, identity_weights(c));
    REQUIRE(attn.scores.shape() == Shape{1, 1});
    const double expect = (1 * -1 + 2 * 0.5 + 3 * 2 + 4 * 1) / std::sqrt(4.0);
    CHECK(std::fabs(attn.scores.data()[0] - expect) <= 1e-6);
    CHECK(attn.scaled);
}

TEST_CASE("cross_attention_scores: orthogonal projections give zero scores") {
    Tensor q(Shape{2, 1, 1}, {1, 0});
    Tensor s(Shape{2, 1, 2}, {0, 0, 1, 1});  // both support pixels = (0,1)
    AttentionMap attn = cross_attention_scores(q, s, identity_weights(2));
    CHECK(attn.scores.data()[0] == 0.0f);
    CHECK(attn.scores.data()[1] == 0.0f);
}

TEST_CASE("cross_attention_scores: seeded cases match the double-loop oracle") {
    for (int k = 0; k < 20; ++k) {
        Rng rng(derive_seed(211, k));
        Tensor q = random_tensor(rng, Shape{5, 2, 2});
        Tensor s = random_tensor(rng, Shape{5, 1, 4});
        ProjectionWeights w = make_projection_weights(900 + k, 0, 5, 5, 3);
        AttentionMap got = cross_attention_scores(q, s, w);
        const std::vector<double> want = ref::attention_scores(q, s, w.wq, w.wk);
        for (std::size_t i = 0; i < got.scores.size(); ++i)
            CHECK(std::fabs(got.scores.data()[i] - want[i]) <= 1e-5);
    }
}

TEST_CASE("make_projection_weights: deterministic, bounded, block-dependent") {
    ProjectionWeights a = make_projection_weights(77, 2, 6, 6, 4);
    ProjectionWeights b = make_projection_weights(77, 2, 6, 6, 4);
    CHECK(a.wq.data() == b.wq.data());
    CHECK(a.wv.data() == b.wv.data());
    ProjectionWeights c = make_projection_weights(77, 3, 6, 6, 4);
    CHECK(a.wq.data() != c.wq.data());
    const float bound = 1.0f / std::sqrt(6.0f);
    for (float v : a.wq.data()) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
}

TEST_CASE("dicm_mask: the hand-traced 2x2 fixture") {
    AttentionMap attn = map_of({0.1f, 0.9f, 0.8f, 0.2f}, 2, 2);
    auto [masked, report] = dicm_mask(attn, flat_mask({0, 1}), flat_mask({0, 1}));
    // column 0 argmax is row 1 (0.8): support 0 vs query 1 -> mask (1,0)
    // column 1 argmax is row 0 (0.9): support 1 vs query 0 -> mask (0,1)
    CHECK(masked.scores(std::size_t{0}, std::size_t{0}) == 0.1f);
    CHECK(masked.scores(std::size_t{0}, std::size_t{1}) == kNegInf);
    CHECK(masked.scores(std::size_t{1}, std::size_t{0}) == kNegInf);
    CHECK(masked.scores(std::size_t{1}, std::size_t{1}) == 0.2f);
    CHECK(report.masked_cells == 2);
    CHECK(report.masked_columns == 2);
    CHECK(report.total_cells == 4);
    CHECK(report.ratio == 0.5);
    CHECK(report.strategy == Strategy::Dicm);
}

TEST_CASE("dicm_mask: consistent masks leave the map unchanged") {
    AttentionMap attn = map_of({0.3f, -0.2f, 0.9f, 0.4f}, 2, 2);
    auto [masked, report] = dicm_mask(attn, flat_mask({1, 1}), flat_mask({1, 1}));
    CHECK(masked.scores.data() == attn.scores.data());
    CHECK(report.masked_cells == 0);
}

TEST_CASE("dicm_mask: at most one cell per column on random episodes") {
    for (int k = 0; k < 10; ++k) {
        Rng rng(derive_seed(223, k));
        const std::size_t n_q = 30, n_s = 30;  // 30 pixels a side, flattened
        Tensor scores = random_tensor(rng, Shape{n_q, n_s}, -2.0f, 2.0f);
        BinaryMask sm = random_mask(rng, 1, n_s);
        BinaryMask qm = random_mask(rng, 1, n_q);
        auto [masked, report] = dicm_mask(AttentionMap{scores, true}, sm, qm);

        CHECK(ref::verify_dicm(scores, masked.scores, sm, qm).empty());
        CHECK(report.masked_cells <= n_s);
        CHECK(report.ratio <= 1.0 / static_cast<double>(n_q));

        // determinism
        auto [again, report2] = dicm_mask(AttentionMap{scores, true}, sm, qm);
        CHECK(again.scores.data() == masked.scores.data());
        CHECK(report2.masked_cells == report.masked_cells);
    }
}

TEST_CASE("cyctr_mask: the hand-traced 2x2 fixture") {
    AttentionMap attn = map_of({0.9f, 0.8f, 0.1f, 0.2f}, 2, 2);
    auto [masked, report] = cyctr_mask(attn, flat_mask({0, 1}));
    // column 0: max_q=0, row 0 max at col 0, masks agree -> consistent
    // column 1: max_q=0, max_s=0, support[1] != support[0] -> whole column masked
    CHECK(masked.scores(std::size_t{0}, std::size_t{0}) == 0.9f);
    CHECK(masked.scores(std::size_t{1}, std::size_t{0}) == 0.1f);
    CHECK(masked.scores(std::size_t{0}, std::size_t{1}) == kNegInf);
    CHECK(masked.scores(std::size_t{1}, std::size_t{1}) == kNegInf);
    CHECK(report.masked_columns == 1);
    CHECK(report.masked_cells == 2);
    CHECK_FALSE(report.skipped);
}

TEST_CASE("cyctr_mask: constant support mask masks nothing") {
    Rng rng(227);
    Tensor scores = random_tensor(rng, Shape{4, 5});
    auto [masked, report] =
        cyctr_mask(AttentionMap{scores, true}, flat_mask({1, 1, 1, 1, 1}));
    CHECK(masked.scores.data() == scores.data());
    CHECK(report.masked_cells == 0);
}

TEST_CASE("cyctr_mask: columns are atomic and ratios are column multiples") {
    for (int k = 0; k < 10; ++k) {
        Rng rng(derive_seed(229, k));
        const std::size_t n_q = 25, n_s = 25;
        Tensor scores = random_tensor(rng, Shape{n_q, n_s}, -2.0f, 2.0f);
        BinaryMask sm = random_mask(rng, 1, n_s);
        auto [masked, report] = cyctr_mask(AttentionMap{scores, true}, sm);

        CHECK(ref::verify_cyctr(scores, masked.scores, sm, report.skipped).empty());
        CHECK(report.masked_cells == report.masked_columns * n_q);
        const double unit = 1.0 / static_cast<double>(n_s);
        const double multiple = report.ratio / unit;
        CHECK(std::fabs(multiple - std::round(multiple)) <= 1e-12);
    }
}

TEST_CASE("attention_forward: strategy none on 1x1 grids returns the value") {
    Rng rng(233);
    Tensor q = random_tensor(rng, Shape{3, 1, 1});
    Tensor s = random_tensor(rng, Shape{3, 1, 1});
    ProjectionWeights w = make_projection_weights(5, 0, 3, 3, 4);
    auto [out, report] = attention_forward(q, s, w, Strategy::None, nullptr, nullptr);
    REQUIRE(out.shape() == Shape{4, 1, 1});
    // softmax over a single score is 1, so the output is exactly V
    for (std::size_t d = 0; d < 4; ++d) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch)
            acc += static_cast<double>(w.wv(d, ch)) * static_cast<double>(s.data()[ch]);
        CHECK(std::fabs(out.data()[d] - acc) <= 1e-6);
    }
    CHECK(report.strategy == Strategy::None);
    CHECK(report.masked_cells == 0);
}

TEST_CASE("attention_forward: masked cells get exactly zero weight") {
    Rng rng(239);
    Tensor q = random_tensor(rng, Shape{4, 2, 2});
    Tensor s = random_tensor(rng, Shape{4, 2, 2});
    ProjectionWeights w = make_projection_weights(6, 0, 4, 4, 4);
    BinaryMask sm = random_mask(rng, 2, 2);
    BinaryMask qm = random_mask(rng, 2, 2);

    AttentionMap attn = cross_attention_scores(q, s, w);
    auto [masked, report] = dicm_mask(attn, sm, qm);
    if (report.masked_cells > 0) {
        Tensor probs = row_softmax(masked.scores);
        for (std::size_t i = 0; i < probs.size(); ++i)
            if (masked.scores.data()[i] == kNegInf) CHECK(probs.data()[i] == 0.0f);
    }
}

TEST_CASE("attention_forward: DICM with all-consistent masks equals strategy none") {
    Rng rng(241);
    Tensor q = random_tensor(rng, Shape{5, 3, 3});
    Tensor s = random_tensor(rng, Shape{5, 3, 3});
    ProjectionWeights w = make_projection_weights(7, 0, 5, 5, 5);
    BinaryMask ones = BinaryMask::ones(3, 3);

    auto [plain, r1] = attention_forward(q, s, w, Strategy::None, nullptr, nullptr);
    auto [masked, r2] = attention_forward(q, s, w, Strategy::Dicm, &ones, &ones);
    CHECK(plain.data() == masked.data());  // bit-identical
    CHECK(r2.masked_cells == 0);
}

TEST_CASE("attention_forward: mode errors mirror the inference constraint") {
    Tensor q(Shape{2, 1, 1}), s(Shape{2, 1, 1});
    ProjectionWeights w = make_projection_weights(8, 0, 2, 2, 2);
    BinaryMask m = BinaryMask::ones(1, 1);
    CHECK_THROWS_AS(attention_forward(q, s, w, Strategy::Dicm, &m, nullptr), ModeError);
    CHECK_THROWS_AS(attention_forward(q, s, w, Strategy::Dicm, nullptr, &m), ModeError);
    CHECK_THROWS_AS(attention_forward(q, s, w, Strategy::Cyctr, nullptr, nullptr),
                    ModeError);
}

TEST_CASE("decoder_chain: single block equals attention_forward") {
    Rng rng(251);
    Tensor q = random_tensor(rng, Shape{4, 2, 3});
    Tensor s = random_tensor(rng, Shape{4, 2, 3});
    std::vector<ProjectionWeights> blocks = {make_projection_weights(9, 0, 4, 4, 4)};
    auto [direct, r] =
        attention_forward(q, s, blocks[0], Strategy::None, nullptr, nullptr);
    auto [chained, reports] =
        decoder_chain(q, s, blocks, Strategy::None, nullptr, nullptr);
    CHECK(direct.data() == chained.data());
    CHECK(reports.size() == 1);
}

TEST_CASE("decoder_chain: four blocks emit four indexed reports") {
    Rng rng(257);
    const std::size_t c = 6, dk = 6;
    Tensor q = random_tensor(rng, Shape{c, 3, 3});
    Tensor s = random_tensor(rng, Shape{c, 3, 3});
    std::vector<ProjectionWeights> blocks;
    for (int b = 0; b < 4; ++b)
        blocks.push_back(make_projection_weights(10, b, b == 0 ? c : dk, c, dk));
    BinaryMask sm = random_mask(rng, 3, 3);
    auto [out, reports] = decoder_chain(q, s, blocks, Strategy::Cyctr, &sm, nullptr);
    REQUIRE(reports.size() == 4);
    for (int b = 0; b < 4; ++b) CHECK(reports[static_cast<std::size_t>(b)].block_index == b);
    CHECK(out.shape() == Shape{dk, 3, 3});
}

TEST_CASE("decoder_chain: all-consistent masks keep none and DICM identical") {
    Rng rng(263);
    const std::size_t c = 5;
    Tensor q = random_tensor(rng, Shape{c, 2, 2});
    Tensor s = random_tensor(rng, Shape{c, 2, 2});
    std::vector<ProjectionWeights> blocks;
    for (int b = 0; b < 3; ++b)
        blocks.push_back(make_projection_weights(11, b, b == 0 ? c : 4, c, 4));
    BinaryMask ones = BinaryMask::ones(2, 2);
    auto [a, ra] = decoder_chain(q, s, blocks, Strategy::None, nullptr, nullptr);
    auto [b, rb] = decoder_chain(q, s, blocks, Strategy::Dicm, &ones, &ones);
    CHECK(a.data() == b.data());
}

TEST_CASE("decoder_chain: errors carry the block index") {
    Rng rng(269);
    Tensor q = random_tensor(rng, Shape{4, 2, 2});
    Tensor s = random_tensor(rng, Shape{4, 2, 2});
    std::vector<ProjectionWeights> blocks = {
        make_projection_weights(12, 0, 4, 4, 4),
        make_projection_weights(12, 1, 5, 4, 4),  // wrong input dim for block 1
    };
    try {
        decoder_chain(q, s, blocks, Strategy::None, nullptr, nullptr);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("block 1") != std::string::npos);
    }
    CHECK_THROWS_AS(decoder_chain(q, s, {}, Strategy::None, nullptr, nullptr),
                    ConfigError);
}

TEST_CASE("masking report serializes with the documented keys") {
    MaskingReport r;
    r.total_cells = 900;
    r.masked_cells = 3;
    r.masked_columns = 3;
    r.ratio = 3.0 / 900.0;
    r.strategy = Strategy::Dicm;
    r.block_index = 2;
    const nlohmann::json j = to_json(r);
    CHECK(j.at("block") == 2);
    CHECK(j.at("strategy") == "dicm");
    CHECK(j.at("total_cells") == 900);
    CHECK(j.at("masked_cells") == 3);
    CHECK(j.at("masked_columns") == 3);
    CHECK(j.at("ratio").get<double>() == doctest::Approx(3.0 / 900.0));
    CHECK(j.at("skipped") == false);
}

TEST_CASE("strategy names round trip") {
    for (Strategy s : {Strategy::None, Strategy::Dicm, Strategy::Cyctr})
        CHECK(strategy_from_name(strategy_name(s)) == s);
    CHECK_THROWS_AS(strategy_from_name("bogus"), ConfigError);
}
