#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Central-difference audits of every backward rule, in double precision.

#include "t2net/ops.hpp"
#include "test_util.hpp"

using namespace t2net;
using t2test::grad_check;
using t2test::project_to_scalar;
using t2test::rand_tensor;

namespace {

using DTensor = TensorPtrT<double>;
using DTape = TapeT<double>;

constexpr double kRelTol = 1e-4;
constexpr double kAbsTol = 1e-6;

}  // namespace

TEST_CASE("grad: conv2d w.r.t. input, weight and bias") {
    Rng rng(101);
    auto input = rand_tensor<double>({2, 2, 5, 5}, rng);
    auto weight = rand_tensor<double>({3, 2, 3, 3}, rng);
    auto bias = rand_tensor<double>({3}, rng);
    for (int stride : {1, 2}) {
        auto proj = rand_tensor<double>({2, 3, stride == 1 ? 5 : 3, stride == 1 ? 5 : 3}, rng);
        auto build = [&](DTape* tape) {
            return project_to_scalar(tape, conv2d(tape, input, weight, bias, stride, 1), proj);
        };
        auto res = grad_check(build, {input, weight, bias});
        INFO("stride ", stride, " rel ", res.max_rel_err, " abs ", res.max_abs_err);
        CHECK(res.ok(kRelTol, kAbsTol));
    }
}

TEST_CASE("grad: pixel_shuffle") {
    Rng rng(103);
    auto input = rand_tensor<double>({1, 8, 3, 3}, rng);
    auto proj = rand_tensor<double>({1, 2, 6, 6}, rng);
    auto res = grad_check(
        [&](DTape* tape) { return project_to_scalar(tape, pixel_shuffle(tape, input, 2), proj); },
        {input});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: unfold scatters overlapping patch gradients") {
    Rng rng(107);
    auto input = rand_tensor<double>({1, 2, 4, 4}, rng);
    auto proj = rand_tensor<double>({1, 18, 16}, rng);
    auto res = grad_check(
        [&](DTape* tape) { return project_to_scalar(tape, unfold(tape, input, 3, 1, 1), proj); },
        {input});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: fold, raw and overlap-normalized") {
    Rng rng(109);
    auto cols = rand_tensor<double>({1, 9, 16}, rng);
    auto proj = rand_tensor<double>({1, 1, 4, 4}, rng);
    for (bool normalize : {false, true}) {
        auto res = grad_check(
            [&](DTape* tape) {
                return project_to_scalar(tape, fold(tape, cols, 3, 1, 1, 4, 4, normalize), proj);
            },
            {cols});
        INFO("normalize ", normalize);
        CHECK(res.ok(kRelTol, kAbsTol));
    }
}

TEST_CASE("grad: index_select_columns accumulates into repeated columns") {
    Rng rng(113);
    auto patches = rand_tensor<double>({2, 3, 5}, rng);
    auto indices = std::make_shared<IntTensor>(std::vector<int>{2, 6},
                                               std::vector<std::int32_t>{0, 2, 2, 4, 1, 2,
                                                                         3, 3, 0, 0, 4, 2});
    auto proj = rand_tensor<double>({2, 3, 6}, rng);
    auto res = grad_check(
        [&](DTape* tape) {
            return project_to_scalar(tape, index_select_columns(tape, patches, indices), proj);
        },
        {patches});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: resample in both modes, up and down") {
    Rng rng(127);
    auto input = rand_tensor<double>({1, 2, 4, 4}, rng);
    for (auto mode : {ResampleMode::Nearest, ResampleMode::Bilinear})
        for (double scale : {2.0, 0.5}) {
            const int os = static_cast<int>(4 * scale);
            auto proj = rand_tensor<double>({1, 2, os, os}, rng);
            auto res = grad_check(
                [&](DTape* tape) {
                    return project_to_scalar(tape, resample(tape, input, scale, mode), proj);
                },
                {input});
            INFO("mode ", mode == ResampleMode::Nearest ? "nearest" : "bilinear", " scale ", scale);
            CHECK(res.ok(kRelTol, kAbsTol));
        }
}

TEST_CASE("grad: add, sub, mul (same shape and broadcast), scalars") {
    Rng rng(131);
    auto a = rand_tensor<double>({2, 3, 3, 3}, rng);
    auto b = rand_tensor<double>({2, 3, 3, 3}, rng);
    auto map = rand_tensor<double>({2, 1, 3, 3}, rng);
    auto proj = rand_tensor<double>({2, 3, 3, 3}, rng);

    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, add(t, a, b), proj); }, {a, b})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, sub(t, a, b), proj); }, {a, b})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, mul(t, a, b), proj); }, {a, b})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, mul(t, a, map), proj); }, {a, map})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, add_scalar(t, a, 0.7), proj); }, {a})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, sub_scalar(t, a, 0.4), proj); }, {a})
              .ok(kRelTol, kAbsTol));
    CHECK(grad_check([&](DTape* t) { return project_to_scalar(t, mul_scalar(t, a, -1.3), proj); }, {a})
              .ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: relu away from the kink") {
    Rng rng(137);
    // keep |x| > 10*h so the finite difference never straddles zero
    auto x = make_tensor<double>({1, 1, 4, 4});
    for (auto& v : x->values) {
        v = rng.uniform(0.01, 1.0);
        if (rng.uniform() < 0.5) v = -v;
    }
    auto proj = rand_tensor<double>({1, 1, 4, 4}, rng);
    auto res = grad_check(
        [&](DTape* t) { return project_to_scalar(t, relu(t, x), proj); }, {x});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: concat_channels routes slices to both inputs") {
    Rng rng(139);
    auto a = rand_tensor<double>({1, 2, 3, 3}, rng);
    auto b = rand_tensor<double>({1, 3, 3, 3}, rng);
    auto proj = rand_tensor<double>({1, 5, 3, 3}, rng);
    auto res = grad_check(
        [&](DTape* t) { return project_to_scalar(t, concat_channels(t, a, b), proj); }, {a, b});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: l1_loss for both arguments, away from ties") {
    Rng rng(149);
    auto p = rand_tensor<double>({1, 1, 4, 4}, rng, 0.5, 1.5);
    auto t = rand_tensor<double>({1, 1, 4, 4}, rng, -1.5, -0.5);  // pred != target everywhere
    auto res = grad_check([&](DTape* tape) { return l1_loss(tape, p, t); }, {p, t});
    CHECK(res.ok(kRelTol, kAbsTol));
}

TEST_CASE("grad: composite graph mixing most ops") {
    Rng rng(151);
    auto x = rand_tensor<double>({1, 2, 4, 4}, rng);
    auto w = rand_tensor<double>({8, 2, 3, 3}, rng, -0.3, 0.3);
    auto bias = rand_tensor<double>({8}, rng, -0.1, 0.1);
    auto map = rand_tensor<double>({1, 1, 8, 8}, rng, 0.1, 0.9);
    auto build = [&](DTape* tape) -> DTensor {
        auto y = conv2d(tape, x, w, bias, 1, 1);        // [1,8,4,4]
        y = pixel_shuffle(tape, y, 2);                  // [1,2,8,8]
        y = relu(tape, y);
        auto up = resample(tape, y, 0.5, ResampleMode::Bilinear);  // [1,2,4,4]
        auto cols = unfold(tape, up, 3, 1, 1);
        auto folded = fold(tape, cols, 3, 1, 1, 4, 4, true);
        auto gated = mul(tape, resample(tape, folded, 2.0, ResampleMode::Nearest), map);
        auto target = make_tensor<double>(gated->shape);  // zeros, constants
        // offset keeps |pred - target| away from its kink for the FD probes
        return l1_loss(tape, add_scalar(tape, gated, 3.0), target);
    };
    auto res = grad_check(build, {x, w, bias, map});
    INFO("rel ", res.max_rel_err, " abs ", res.max_abs_err);
    CHECK(res.ok(kRelTol, kAbsTol));
}
