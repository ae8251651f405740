#include "doctest.h"

#include <random>

#include "gacnet/ops.hpp"
#include "gradcheck.hpp"

using namespace gacnet;
namespace tu = gacnet::testutil;

TEST_CASE("elementwise and reduction gradients match finite differences") {
    std::mt19937_64 rng(1);
    Tensor x = tu::random_tensor({3, 4}, rng);
    auto scalarize = [](Tape& t, VarId v) {
        std::mt19937_64 r(7);
        return ops::dot_const(t, v, tu::random_tensor(t.val(v).shape, r));
    };

    CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) {
              return scalarize(t, ops::mul(t, v, ops::add_scalar(t, v, 0.3)));
          }) < 1e-7);
    CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) {
              return scalarize(t, ops::sigmoid(t, v));
          }) < 1e-7);
    CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) { return ops::sum(t, ops::relu(t, v)); },
                             1e-6) < 1e-6);
}

TEST_CASE("matmul / linear / softmax gradients") {
    std::mt19937_64 rng(2);
    Tensor a = tu::random_tensor({3, 5}, rng);
    Tensor b = tu::random_tensor({5, 2}, rng);
    CHECK(tu::gradcheck_leaf(a, [&](Tape& t, VarId v) {
              return ops::sum(t, ops::matmul(t, v, t.constant(b)));
          }) < 1e-7);
    CHECK(tu::gradcheck_leaf(b, [&](Tape& t, VarId v) {
              return ops::sum(t, ops::matmul(t, t.constant(a), v));
          }) < 1e-7);
    std::mt19937_64 r2(3);
    Tensor w = tu::random_tensor({4, 6}, r2);
    CHECK(tu::gradcheck_leaf(w, [&](Tape& t, VarId v) {
              std::mt19937_64 r(9);
              return ops::dot_const(t, ops::softmax_rows(t, v),
                                    tu::random_tensor({4, 6}, r));
          }) < 1e-6);
}

TEST_CASE("conv2d gradient w.r.t input, weight, bias") {
    std::mt19937_64 rng(4);
    Tensor x = tu::random_tensor({2, 5, 6}, rng);
    Tensor w = tu::random_tensor({3, 2, 3, 3}, rng);
    Tensor b = tu::random_tensor({3}, rng);
    auto loss_of = [&](Tape& t, VarId xv, VarId wv, VarId bv) {
        std::mt19937_64 r(11);
        VarId y = ops::conv2d(t, xv, wv, bv, 1, 1);
        return ops::dot_const(t, y, tu::random_tensor(t.val(y).shape, r));
    };
    CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) {
              return loss_of(t, v, t.constant(w), t.constant(b));
          }) < 1e-6);
    CHECK(tu::gradcheck_leaf(w, [&](Tape& t, VarId v) {
              return loss_of(t, t.constant(x), v, t.constant(b));
          }) < 1e-6);
    CHECK(tu::gradcheck_leaf(b, [&](Tape& t, VarId v) {
              return loss_of(t, t.constant(x), t.constant(w), v);
          }) < 1e-6);

    SUBCASE("strided") {
        CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) {
                  std::mt19937_64 r(13);
                  VarId y = ops::conv2d(t, v, t.constant(w), t.constant(b), 2, 1);
                  return ops::dot_const(t, y, tu::random_tensor(t.val(y).shape, r));
              }) < 1e-6);
    }
}

TEST_CASE("bilinear resize: exact for constants, gradient correct") {
    Tensor c = Tensor::full({4, 4}, 3.25);
    Tape t;
    VarId up = ops::bilinear_resize(t, t.constant(c), 9, 7);
    for (double v : t.val(up).data) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));

    std::mt19937_64 rng(5);
    Tensor x = tu::random_tensor({2, 3, 4}, rng);
    CHECK(tu::gradcheck_leaf(x, [&](Tape& tt, VarId v) {
              std::mt19937_64 r(17);
              VarId y = ops::bilinear_resize(tt, v, 6, 8);
              return ops::dot_const(tt, y, tu::random_tensor(tt.val(y).shape, r));
          }) < 1e-7);
}

TEST_CASE("segment, gather and scatter gradients") {
    std::mt19937_64 rng(6);
    Tensor x = tu::random_tensor({7}, rng);
    std::vector<int> offsets{3, 7};
    CHECK(tu::gradcheck_leaf(x, [&](Tape& t, VarId v) {
              std::mt19937_64 r(19);
              return ops::dot_const(t, ops::segment_softmax(t, v, offsets),
                                    tu::random_tensor({7}, r));
          }) < 1e-6);
    Tensor m = tu::random_tensor({5, 3}, rng);
    CHECK(tu::gradcheck_leaf(m, [&](Tape& t, VarId v) {
              std::mt19937_64 r(23);
              VarId g = ops::gather_rows(t, v, {0, 2, 2, 4});
              return ops::dot_const(t, g, tu::random_tensor({4, 3}, r));
          }) < 1e-7);
    Tensor s = tu::random_tensor({4}, rng);
    CHECK(tu::gradcheck_leaf(s, [&](Tape& t, VarId v) {
              std::mt19937_64 r(29);
              VarId mp = ops::scatter_to_map(t, v, {1, 5, 8, 11}, 3, 4);
              return ops::dot_const(t, mp, tu::random_tensor({3, 4}, r));
          }) < 1e-7);
}

TEST_CASE("group maxpool takes channelwise max and routes gradients") {
    Tensor x({4, 2}, {1, 9, 5, 2, 0, 0, 7, -3});
    Tape t;
    VarId v = t.leaf(x, true);
    VarId y = ops::group_maxpool(t, v, {2, 4});
    CHECK(t.val(y).at(0, 0) == 5);
    CHECK(t.val(y).at(0, 1) == 9);
    CHECK(t.val(y).at(1, 0) == 7);
    CHECK(t.val(y).at(1, 1) == 0);
    VarId s = ops::sum(t, y);
    t.backward(s);
    CHECK(t.grad(v).at(1, 0) == 1.0);  // argmax rows get the gradient
    CHECK(t.grad(v).at(0, 1) == 1.0);
    CHECK(t.grad(v).at(0, 0) == 0.0);
}

TEST_CASE("parameter gradients accumulate into the registry") {
    ParamRegistry reg(42);
    auto fn = [](Tape& t, ParamRegistry& r) {
        VarId w = t.param("toy.w", r, {3, 2}, Init::HeFanIn);
        Tensor x({1, 3}, {0.5, -1.0, 2.0});
        VarId b = t.param("toy.b", r, {2}, Init::Zero);
        VarId y = ops::linear_rows(t, t.constant(x), w, b);
        return ops::sum(t, ops::mul(t, y, y));
    };
    CHECK(tu::gradcheck_param(reg, "toy.w", fn) < 1e-7);
    CHECK(tu::gradcheck_param(reg, "toy.b", fn) < 1e-7);
}
