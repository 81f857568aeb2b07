#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "t2net/kernels.hpp"
#include "t2net/ops.hpp"
#include "test_util.hpp"

using namespace t2net;
using t2test::rand_tensor;

TEST_CASE("conv2d: all-zero input yields the bias in every output channel") {
    auto input = make_tensor<float>({1, 2, 4, 4});
    auto weight = make_tensor<float>({3, 2, 3, 3});
    Rng rng(1);
    for (auto& v : weight->values) v = static_cast<float>(rng.uniform(-1, 1));
    auto bias = make_tensor<float>({3}, {0.5f, -1.25f, 2.0f});
    auto out = conv2d<float>(nullptr, input, weight, bias, 1, 1);
    for (int co = 0; co < 3; ++co)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(out->at4(0, co, y, x) == bias->values[co]);
}

TEST_CASE("conv2d: centered impulse reads the kernel center (cross-correlation)") {
    auto input = make_tensor<float>({1, 1, 3, 3});
    input->at4(0, 0, 1, 1) = 1.0f;
    auto weight = make_tensor<float>({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) weight->values[i] = static_cast<float>(i + 1);
    auto bias = make_tensor<float>({1});
    auto out = conv2d<float>(nullptr, input, weight, bias, 1, 1);
    CHECK(out->at4(0, 0, 1, 1) == weight->at4(0, 0, 1, 1));
    // impulse response: out[y][x] = w[1 + (1-y)... full check against the oracle
    auto ref = t2oracle::conv2d_loop<float>(input, weight, bias, 1, 1);
    for (std::size_t i = 0; i < out->numel(); ++i) CHECK(out->values[i] == ref->values[i]);
}

TEST_CASE("conv2d: matches the brute-force loop oracle") {
    Rng rng(7);
    auto input = rand_tensor<float>({1, 2, 5, 5}, rng);
    auto weight = rand_tensor<float>({3, 2, 3, 3}, rng);
    auto bias = rand_tensor<float>({3}, rng);
    for (int stride : {1, 2})
        for (int padding : {0, 1, 2}) {
            auto got = conv2d<float>(nullptr, input, weight, bias, stride, padding);
            auto ref = t2oracle::conv2d_loop<float>(input, weight, bias, stride, padding);
            REQUIRE(got->shape == ref->shape);
            for (std::size_t i = 0; i < got->numel(); ++i)
                CHECK(std::fabs(got->values[i] - ref->values[i]) <=
                      1e-5 * std::max(1.0f, std::fabs(ref->values[i])));
        }
}

TEST_CASE("conv2d: channel mismatch names both shapes") {
    auto input = make_tensor<float>({1, 2, 5, 5});
    auto weight = make_tensor<float>({3, 3, 3, 3});
    auto bias = make_tensor<float>({3});
    CHECK_THROWS_WITH_AS(conv2d<float>(nullptr, input, weight, bias, 1, 1),
                         doctest::Contains("[1,2,5,5]"), DimensionError);
}

TEST_CASE("pixel_shuffle: r = 1 is the identity") {
    Rng rng(3);
    auto input = rand_tensor<float>({2, 3, 4, 4}, rng);
    auto out = pixel_shuffle<float>(nullptr, input, 1);
    CHECK(out->shape == input->shape);
    CHECK(out->values == input->values);
}

TEST_CASE("pixel_shuffle: 1x4x1x1 [a,b,c,d] becomes the 2x2 block [[a,b],[c,d]]") {
    auto input = make_tensor<float>({1, 4, 1, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto out = pixel_shuffle<float>(nullptr, input, 2);
    REQUIRE(out->shape == std::vector<int>{1, 1, 2, 2});
    CHECK(out->values == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
}

TEST_CASE("pixel_shuffle: permutation preserves the element sum") {
    Rng rng(11);
    auto input = rand_tensor<float>({2, 8, 3, 3}, rng);
    auto out = pixel_shuffle<float>(nullptr, input, 2);
    double s_in = 0, s_out = 0;
    for (float v : input->values) s_in += v;
    for (float v : out->values) s_out += v;
    CHECK(s_in == doctest::Approx(s_out).epsilon(1e-6));
    // bijective: sorted multisets agree
    auto a = input->values, b = out->values;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
}

TEST_CASE("pixel_shuffle: rejects channel counts not divisible by r^2") {
    auto input = make_tensor<float>({1, 6, 2, 2});
    CHECK_THROWS_AS(pixel_shuffle<float>(nullptr, input, 2), DimensionError);
}

TEST_CASE("unfold: unit patch is a reshape") {
    Rng rng(5);
    auto input = rand_tensor<float>({2, 3, 4, 5}, rng);
    auto out = unfold<float>(nullptr, input, 1, 1, 0);
    REQUIRE(out->shape == std::vector<int>{2, 3, 20});
    CHECK(out->values == input->values);
}

TEST_CASE("unfold: center column of a padded 3x3 unfold is the whole input") {
    auto input = make_tensor<float>({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) input->values[i] = static_cast<float>(10 + i);
    auto out = unfold<float>(nullptr, input, 3, 1, 1);
    REQUIRE(out->shape == std::vector<int>{1, 9, 9});
    for (int d = 0; d < 9; ++d) CHECK(out->values[d * 9 + 4] == input->values[d]);
}

TEST_CASE("fold(unfold(x)) equals x times the per-pixel overlap count") {
    Rng rng(9);
    auto input = rand_tensor<float>({1, 2, 5, 5}, rng);
    auto cols = unfold<float>(nullptr, input, 3, 1, 1);
    auto raw = fold<float>(nullptr, cols, 3, 1, 1, 5, 5, false);
    auto counts = kern::overlap_counts(5, 5, 3, 1, 1);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 25; ++i)
            CHECK(raw->values[c * 25 + i] ==
                  doctest::Approx(input->values[c * 25 + i] * counts[i]).epsilon(1e-6));
    auto normalized = fold<float>(nullptr, cols, 3, 1, 1, 5, 5, true);
    for (std::size_t i = 0; i < input->numel(); ++i)
        CHECK(std::fabs(normalized->values[i] - input->values[i]) < 1e-6);
}

TEST_CASE("index_select_columns: identity, constant and gather oracle") {
    Rng rng(13);
    auto patches = rand_tensor<float>({2, 3, 6}, rng);

    std::vector<std::int32_t> ident(12);
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 6; ++i) ident[b * 6 + i] = i;
    auto out = index_select_columns<float>(
        nullptr, patches, std::make_shared<IntTensor>(std::vector<int>{2, 6}, ident));
    CHECK(out->values == patches->values);

    auto all_two = std::make_shared<IntTensor>(std::vector<int>{2, 4},
                                               std::vector<std::int32_t>(8, 2));
    auto out2 = index_select_columns<float>(nullptr, patches, all_two);
    for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 3; ++d)
            for (int i = 0; i < 4; ++i)
                CHECK(out2->values[(b * 3 + d) * 4 + i] == patches->values[(b * 3 + d) * 6 + 2]);

    std::vector<std::int32_t> idx(10);
    for (auto& v : idx) v = rng.uniform_int(6);
    auto indices = std::make_shared<IntTensor>(std::vector<int>{2, 5}, idx);
    auto out3 = index_select_columns<float>(nullptr, patches, indices);
    for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 3; ++d)
            for (int i = 0; i < 5; ++i)
                CHECK(out3->values[(b * 3 + d) * 5 + i] ==
                      patches->values[(b * 3 + d) * 6 + idx[b * 5 + i]]);
}

TEST_CASE("index_select_columns: out-of-range index reports batch, position, value") {
    auto patches = make_tensor<float>({1, 2, 4});
    auto bad = std::make_shared<IntTensor>(std::vector<int>{1, 2}, std::vector<std::int32_t>{1, 7});
    CHECK_THROWS_WITH_AS(index_select_columns<float>(nullptr, patches, bad),
                         doctest::Contains("index 7"), BoundsError);
}

TEST_CASE("resample: scale 1 is the identity for both modes") {
    Rng rng(17);
    auto input = rand_tensor<float>({1, 2, 4, 4}, rng);
    for (auto mode : {ResampleMode::Nearest, ResampleMode::Bilinear}) {
        auto out = resample<float>(nullptr, input, 1.0, mode);
        CHECK(out->values == input->values);
    }
}

TEST_CASE("resample: constants stay constant at any scale") {
    auto input = make_tensor<float>({1, 1, 4, 4}, std::vector<float>(16, 0.37f));
    for (auto mode : {ResampleMode::Nearest, ResampleMode::Bilinear})
        for (double scale : {2.0, 0.5, 4.0}) {
            auto out = resample<float>(nullptr, input, scale, mode);
            for (float v : out->values) CHECK(v == 0.37f);
        }
}

TEST_CASE("resample: bilinear 2x2 -> 4x4 matches the closed-form weights") {
    auto input = make_tensor<float>({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto out = resample<float>(nullptr, input, 2.0, ResampleMode::Bilinear);
    // src = (dst + 0.5)/2 - 0.5 -> offsets {-0.25, 0.25, 0.75, 1.25}, clamped
    auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
    const double rows[4][2] = {{1, 2}, {1, 2}, {3, 4}, {3, 4}};
    const double ty[4] = {0.0, 0.25, 0.75, 0.0};   // fraction toward next row
    const int y0[4] = {0, 0, 0, 1}, y1[4] = {0, 1, 1, 1};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const double tx[4] = {0.0, 0.25, 0.75, 0.0};
            const int x0[4] = {0, 0, 0, 1}, x1[4] = {0, 1, 1, 1};
            const double top = lerp(rows[2 * y0[y]][x0[x]], rows[2 * y0[y]][x1[x]], tx[x]);
            const double bot = lerp(rows[2 * y1[y]][x0[x]], rows[2 * y1[y]][x1[x]], tx[x]);
            const double want = lerp(top, bot, ty[y]);
            CHECK(out->at4(0, 0, y, x) == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("resample: non-integral target size is rejected") {
    auto input = make_tensor<float>({1, 1, 3, 3});
    CHECK_THROWS_AS(resample<float>(nullptr, input, 0.5, ResampleMode::Bilinear), DimensionError);
}

TEST_CASE("elementwise identities and relu") {
    Rng rng(23);
    auto x = rand_tensor<float>({1, 2, 3, 3}, rng);
    auto zero = make_tensor<float>(x->shape);
    auto one = make_tensor<float>(x->shape, std::vector<float>(x->numel(), 1.0f));
    CHECK(add<float>(nullptr, x, zero)->values == x->values);
    CHECK(mul<float>(nullptr, x, one)->values == x->values);

    auto r = make_tensor<float>({3}, {-1.0f, 0.0f, 2.0f});
    auto rr = relu<float>(nullptr, r);
    CHECK(rr->values == std::vector<float>{0.0f, 0.0f, 2.0f});

    auto y = make_tensor<float>({1, 2, 4, 4});
    CHECK_THROWS_AS(add<float>(nullptr, x, y), DimensionError);
    CHECK_THROWS_AS(mul<float>(nullptr, x, y), DimensionError);
}

TEST_CASE("elementwise scalar forms") {
    auto x = make_tensor<float>({3}, {1.0f, -2.0f, 0.5f});
    CHECK(add_scalar<float>(nullptr, x, 0.25f)->values == std::vector<float>{1.25f, -1.75f, 0.75f});
    CHECK(sub_scalar<float>(nullptr, x, 0.5f)->values == std::vector<float>{0.5f, -2.5f, 0.0f});
    CHECK(mul_scalar<float>(nullptr, x, -2.0f)->values == std::vector<float>{-2.0f, 4.0f, -1.0f});
}

TEST_CASE("mul: single-channel map broadcasts across channels") {
    Rng rng(29);
    auto full = rand_tensor<float>({2, 3, 2, 2}, rng);
    auto map = rand_tensor<float>({2, 1, 2, 2}, rng);
    auto out = mul<float>(nullptr, full, map);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x)
                    CHECK(out->at4(b, c, y, x) == full->at4(b, c, y, x) * map->at4(b, 0, y, x));
}

TEST_CASE("concat_channels: values preserved blockwise") {
    Rng rng(31);
    auto a = rand_tensor<float>({2, 3, 2, 2}, rng);
    auto b = rand_tensor<float>({2, 5, 2, 2}, rng);
    auto out = concat_channels<float>(nullptr, a, b);
    REQUIRE(out->shape == std::vector<int>{2, 8, 2, 2});
    for (int bi = 0; bi < 2; ++bi) {
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 4; ++i)
                CHECK(out->values[(bi * 8 + c) * 4 + i] == a->values[(bi * 3 + c) * 4 + i]);
        for (int c = 0; c < 5; ++c)
            for (int i = 0; i < 4; ++i)
                CHECK(out->values[(bi * 8 + 3 + c) * 4 + i] == b->values[(bi * 5 + c) * 4 + i]);
    }
    auto bad = make_tensor<float>({2, 5, 3, 2});
    CHECK_THROWS_AS(concat_channels<float>(nullptr, a, bad), DimensionError);
}

TEST_CASE("l1_loss: zero for equal inputs, 0.5 for a uniform 0.5 offset, loop oracle") {
    Rng rng(37);
    auto t = rand_tensor<float>({1, 1, 4, 4}, rng);
    CHECK(l1_loss<float>(nullptr, t, t)->values[0] == 0.0f);

    auto shifted = make_tensor<float>(t->shape);
    for (std::size_t i = 0; i < t->numel(); ++i) shifted->values[i] = t->values[i] + 0.5f;
    CHECK(l1_loss<float>(nullptr, shifted, t)->values[0] == doctest::Approx(0.5).epsilon(1e-6));

    auto p = rand_tensor<float>({2, 3, 3, 3}, rng);
    auto q = rand_tensor<float>({2, 3, 3, 3}, rng);
    double want = 0;
    for (std::size_t i = 0; i < p->numel(); ++i) want += std::fabs(p->values[i] - q->values[i]);
    want /= static_cast<double>(p->numel());
    CHECK(l1_loss<float>(nullptr, p, q)->values[0] == doctest::Approx(want).epsilon(1e-6));

    auto bad = make_tensor<float>({2, 3, 3, 4});
    CHECK_THROWS_AS(l1_loss<float>(nullptr, p, bad), DimensionError);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x, reuse doubles") {
    Rng rng(41);
    auto x = rand_tensor<float>({1, 1, 3, 3}, rng, -1, 1, true);
    {
        Tape tape;
        auto loss = sum<float>(&tape, x);
        tape.backward(loss);
        for (float g : x->grad) CHECK(g == 1.0f);
    }
    {
        x->grad.clear();
        Tape tape;
        auto loss = sum<float>(&tape, mul<float>(&tape, x, x));
        tape.backward(loss);
        for (std::size_t i = 0; i < x->numel(); ++i)
            CHECK(x->grad[i] == doctest::Approx(2.0f * x->values[i]).epsilon(1e-6));
    }
    {
        // linearity: grad of (a + a) is twice the grad of a single use
        x->grad.clear();
        Tape tape;
        auto loss = sum<float>(&tape, add<float>(&tape, x, x));
        tape.backward(loss);
        for (float g : x->grad) CHECK(g == 2.0f);
    }
}

TEST_CASE("backward: non-scalar loss is a contract error") {
    auto x = make_tensor<float>({2, 2}, true);
    Tape tape;
    auto y = add<float>(&tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("adam: zero gradients leave the parameter unchanged") {
    auto p = make_tensor<float>({4}, {1.0f, -2.0f, 3.0f, 0.5f}, true);
    p->ensure_grad();
    AdamState st;
    auto before = p->values;
    for (int i = 0; i < 5; ++i) adam_step(*p, st, 0.1, 0.9, 0.999, 1e-8);
    CHECK(p->values == before);
    CHECK(st.step == 5);
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
    auto p = make_tensor<float>({2}, {1.0f, -1.0f}, true);
    p->ensure_grad();
    p->grad = {0.3f, -2.0f};
    AdamState st;
    adam_step(*p, st, 0.01, 0.9, 0.999, 1e-12);
    CHECK(p->values[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
    CHECK(p->values[1] == doctest::Approx(-1.0 + 0.01).epsilon(1e-5));
}

TEST_CASE("adam: descends (w - 3)^2 to within 0.2 in 100 steps at lr 0.1") {
    auto w = make_tensor<float>({1}, {0.0f}, true);
    AdamState st;
    for (int i = 0; i < 100; ++i) {
        w->ensure_grad();
        w->grad[0] = 2.0f * (w->values[0] - 3.0f);
        adam_step(*w, st, 0.1, 0.9, 0.999, 1e-8);
    }
    CHECK(std::fabs(w->values[0] - 3.0f) < 0.2f);
}

TEST_CASE("adam: missing gradient is a contract error") {
    auto p = make_tensor<float>({2}, true);
    AdamState st;
    CHECK_THROWS_AS(adam_step(*p, st, 0.1, 0.9, 0.999, 1e-8), ContractError);
}

TEST_CASE("forward determinism: identical inputs give bit-identical values") {
    auto run = []() {
        Rng rng(99);
        auto input = rand_tensor<float>({1, 2, 6, 6}, rng);
        auto weight = rand_tensor<float>({4, 2, 3, 3}, rng);
        auto bias = rand_tensor<float>({4}, rng);
        auto out = conv2d<float>(nullptr, input, weight, bias, 1, 1);
        return out->values;
    };
    CHECK(run() == run());
}
