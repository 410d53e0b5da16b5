#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ditcache/errors.hpp"
#include "ditcache/ops.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/tensor.hpp"

using namespace ditcache;
using namespace ditcache::ad;

namespace {

// Central finite differences over the flat entries of `param`. `f` rebuilds
// the full loss from scratch so every evaluation sees the perturbed value.
std::vector<double> fd_grad(Tensor& param, const std::function<double()>& f, double h = 1e-5) {
    std::vector<double> g(param.size());
    auto& vals = param.mutable_values();
    for (size_t i = 0; i < vals.size(); i++) {
        double keep = vals[i];
        vals[i] = keep + h;
        double up = f();
        vals[i] = keep - h;
        double dn = f();
        vals[i] = keep;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

double rel_err(double a, double b) {
    double m = std::max(std::fabs(a), std::fabs(b));
    if (m < 1e-8)
        return 0.0;  // both effectively zero
    return std::fabs(a - b) / m;
}

void check_grads(const std::vector<double>& ad_grad, const std::vector<double>& fd,
                 double tol = 1e-6) {
    REQUIRE(ad_grad.size() == fd.size());
    for (size_t i = 0; i < fd.size(); i++) {
        INFO("entry ", i, ": ad=", ad_grad[i], " fd=", fd[i]);
        CHECK(rel_err(ad_grad[i], fd[i]) < tol);
    }
}

Tensor randn(Rng& rng, Shape shape, bool requires_grad = false) {
    auto v = rng.normal_vec(static_cast<size_t>(numel(shape)));
    return requires_grad ? Tensor::param(shape, std::move(v)) : Tensor::from(shape, std::move(v));
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor out = matmul(eye, m);
    CHECK(out.values() == m.values());

    Tensor a = Tensor::from({1, 1}, {2});
    Tensor b = Tensor::from({1, 1}, {3});
    CHECK(matmul(a, b).item() == doctest::Approx(6.0));
}

TEST_CASE("matmul shape errors name both shapes") {
    Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = Tensor::from({4, 2}, std::vector<double>(8, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[2,3]"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences (3x4 by 4x2)") {
    Rng rng(7);
    Tensor a = randn(rng, {3, 4}, true);
    Tensor b = randn(rng, {4, 2});
    auto loss_val = [&]() { return sum(matmul(a, b)).item(); };
    Tensor loss = sum(matmul(a, b));
    backward(loss);
    check_grads(a.grad(), fd_grad(a, loss_val));
}

TEST_CASE("batched matmul gradients") {
    Rng rng(11);
    Tensor a = randn(rng, {2, 3, 4}, true);
    Tensor b2 = randn(rng, {4, 5}, true);
    {
        Tensor loss = frobenius_sq(matmul(a, b2), Tensor::zeros({2, 3, 5}));
        backward(loss);
        auto f = [&]() { return frobenius_sq(matmul(a, b2), Tensor::zeros({2, 3, 5})).item(); };
        check_grads(a.grad(), fd_grad(a, f));
        check_grads(b2.grad(), fd_grad(b2, f));
    }
    a.zero_grad();
    Tensor b3 = randn(rng, {2, 4, 5}, true);
    {
        Tensor loss = sum(matmul(a, b3));
        backward(loss);
        auto f = [&]() { return sum(matmul(a, b3)).item(); };
        check_grads(a.grad(), fd_grad(a, f));
        check_grads(b3.grad(), fd_grad(b3, f));
    }
}

TEST_CASE("sigmoid basics") {
    Tensor x = Tensor::from({1}, {0.0});
    CHECK(sigmoid(x).item() == doctest::Approx(0.5));
    Tensor big = Tensor::from({2}, {50.0, -50.0});
    auto v = sigmoid(big).values();
    CHECK(v[0] < 1.0);
    CHECK(v[0] > 0.999);
    CHECK(v[1] > 0.0);
}

TEST_CASE("layernorm of a constant vector is zero before scale/shift") {
    Tensor x = Tensor::from({1, 4}, {3.5, 3.5, 3.5, 3.5});
    Tensor g = Tensor::from({4}, {1, 1, 1, 1});
    Tensor b = Tensor::from({4}, {0, 0, 0, 0});
    auto v = layernorm(x, g, b).values();
    for (double y : v)
        CHECK(y == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(3);
    Tensor x = randn(rng, {4, 7});
    auto v = softmax(x).values();
    for (int r = 0; r < 4; r++) {
        double s = 0.0;
        for (int j = 0; j < 7; j++)
            s += v[r * 7 + j];
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax gradient vs finite differences on a length-5 vector") {
    Rng rng(5);
    Tensor x = randn(rng, {5}, true);
    Tensor w = randn(rng, {5});
    auto f = [&]() { return sum(mul(softmax(x), w)).item(); };
    Tensor loss = sum(mul(softmax(x), w));
    backward(loss);
    check_grads(x.grad(), fd_grad(x, f));
}

TEST_CASE("elementwise gradients vs finite differences") {
    Rng rng(13);
    Tensor a = randn(rng, {2, 3}, true);
    Tensor b = randn(rng, {2, 3}, true);
    Tensor s = randn(rng, {1}, true);
    auto f = [&]() {
        Tensor t = add(mul(a, b), mul(s, a));
        return frobenius_sq(gelu(t), Tensor::zeros({2, 3})).item();
    };
    Tensor loss = frobenius_sq(gelu(add(mul(a, b), mul(s, a))), Tensor::zeros({2, 3}));
    backward(loss);
    check_grads(a.grad(), fd_grad(a, f));
    check_grads(b.grad(), fd_grad(b, f));
    check_grads(s.grad(), fd_grad(s, f));
}

TEST_CASE("layernorm gradients vs finite differences") {
    Rng rng(17);
    Tensor x = randn(rng, {2, 6}, true);
    Tensor g = randn(rng, {6}, true);
    Tensor b = randn(rng, {6}, true);
    Tensor target = randn(rng, {2, 6});
    auto f = [&]() { return frobenius_sq(layernorm(x, g, b), target).item(); };
    Tensor loss = frobenius_sq(layernorm(x, g, b), target);
    backward(loss);
    check_grads(x.grad(), fd_grad(x, f), 2e-6);
    check_grads(g.grad(), fd_grad(g, f), 2e-6);
    check_grads(b.grad(), fd_grad(b, f), 2e-6);
}

TEST_CASE("frobenius_sq values and gradient") {
    Tensor a = Tensor::from({2}, {1, 2});
    Tensor z = Tensor::zeros({2});
    CHECK(frobenius_sq(a, a).item() == 0.0);
    CHECK(frobenius_sq(a, z).item() == doctest::Approx(5.0));

    Rng rng(23);
    Tensor w = randn(rng, {3, 3}, true);
    Tensor t = randn(rng, {3, 3});
    Tensor loss = frobenius_sq(w, t);
    backward(loss);
    auto f = [&]() { return frobenius_sq(w, t).item(); };
    check_grads(w.grad(), fd_grad(w, f));
}

TEST_CASE("frobenius_sq shape mismatch") {
    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_AS(frobenius_sq(a, b), ShapeError);
}

TEST_CASE("backward: sum gives all-ones, frobenius vs zero gives 2w") {
    Tensor w = Tensor::param({3}, {1.0, -2.0, 0.5});
    backward(sum(w));
    for (double g : w.grad())
        CHECK(g == 1.0);

    w.zero_grad();
    backward(frobenius_sq(w, Tensor::zeros({3})));
    auto g = w.grad();
    for (int i = 0; i < 3; i++)
        CHECK(g[i] == doctest::Approx(2.0 * w.values()[i]));
}

TEST_CASE("backward errors: non-scalar loss and cleared graph") {
    Tensor w = Tensor::param({2}, {1.0, 2.0});
    CHECK_THROWS_AS(backward(scale(w, 2.0)), ShapeError);
    Tape::active().clear();

    Tensor loss = sum(w);
    backward(loss);
    CHECK_THROWS_AS(backward(loss), NumericError);
}

TEST_CASE("gradient accumulation is additive until zeroed") {
    Tensor w = Tensor::param({2}, {1.0, 1.0});
    backward(sum(w));
    backward(sum(w));
    CHECK(w.grad()[0] == 2.0);
    w.zero_grad();
    backward(sum(w));
    CHECK(w.grad()[0] == 1.0);
}

TEST_CASE("detach: no requires_grad, no graph edge, zero contribution") {
    Tensor w = Tensor::param({2}, {3.0, 4.0});
    Tensor d = detach(w);
    CHECK_FALSE(d.requires_grad());

    size_t before = Tape::active().node_count();
    Tensor c = mul(d, d);  // no tracked inputs: must not allocate nodes
    CHECK(Tape::active().node_count() == before);

    Tensor loss = sum(add(w, mul(d, Tensor::scalar(10.0))));
    backward(loss);
    CHECK(w.grad()[0] == 1.0);  // only the direct path contributes
}

TEST_CASE("index permutation ops round-trip and differentiate") {
    Rng rng(31);
    Tensor x = randn(rng, {2, 4, 6}, true);
    Tensor y = merge_heads(split_heads(x, 3), 3);
    CHECK(y.values() == x.values());

    Tensor img = randn(rng, {2, 1, 4, 4}, true);
    Tensor tok = patchify(img, 2);
    CHECK(tok.shape() == Shape{2, 4, 4});
    Tensor back = unpatchify(tok, 1, 4, 4, 2);
    CHECK(back.values() == img.values());

    Tensor target = randn(rng, {2, 4, 4});
    auto f = [&]() { return frobenius_sq(patchify(img, 2), target).item(); };
    Tensor loss = frobenius_sq(patchify(img, 2), target);
    backward(loss);
    check_grads(img.grad(), fd_grad(img, f));
}

TEST_CASE("transpose, reshape, add_rows, gather_rows gradients") {
    Rng rng(37);
    Tensor x = randn(rng, {2, 3, 4}, true);
    Tensor v = randn(rng, {2, 4}, true);
    Tensor tbl = randn(rng, {5, 4}, true);
    std::vector<int> ids = {1, 4};
    Tensor target = randn(rng, {2, 4, 3});

    auto f = [&]() {
        Tensor t = add_rows(x, add(v, gather_rows(tbl, ids)));
        return frobenius_sq(transpose_last2(t), target).item();
    };
    Tensor loss = frobenius_sq(transpose_last2(add_rows(x, add(v, gather_rows(tbl, ids)))), target);
    backward(loss);
    check_grads(x.grad(), fd_grad(x, f));
    check_grads(v.grad(), fd_grad(v, f));
    check_grads(tbl.grad(), fd_grad(tbl, f));

    Tensor r = reshape(x, {6, 4});
    CHECK(r.shape() == Shape{6, 4});
    CHECK(r.values() == x.values());
}

TEST_CASE("backward is bit-deterministic for an identical graph") {
    auto run = [](uint64_t seed) {
        Tape tape;
        TapeScope scope(tape);
        Rng rng(seed);
        Tensor w = randn(rng, {4, 4}, true);
        Tensor x = randn(rng, {4, 4});
        Tensor loss = frobenius_sq(gelu(matmul(x, w)), Tensor::zeros({4, 4}));
        tape.backward(loss);
        return w.grad();
    };
    CHECK(run(99) == run(99));
}

TEST_CASE("composite gradcheck on randomized rank<=3 inputs") {
    Rng rng(41);
    for (int trial = 0; trial < 3; trial++) {
        Tensor w = randn(rng, {3, 4, 4}, true);
        Tensor x = randn(rng, {3, 4, 4});
        Tensor g = Tensor::param({4}, rng.normal_vec(4, 1.0, 0.1));
        Tensor b = Tensor::param({4}, rng.normal_vec(4, 0.0, 0.1));
        auto f = [&]() {
            Tensor h = layernorm(add(x, w), g, b);
            Tensor s = softmax(matmul(h, transpose_last2(h)));
            return frobenius_sq(matmul(s, h), Tensor::zeros({3, 4, 4})).item();
        };
        Tensor loss = frobenius_sq(
            matmul(softmax(matmul(layernorm(add(x, w), g, b),
                                  transpose_last2(layernorm(add(x, w), g, b)))),
                   layernorm(add(x, w), g, b)),
            Tensor::zeros({3, 4, 4}));
        backward(loss);
        // relative error < 1e-4 per the gradcheck contract; h=1e-5
        check_grads(w.grad(), fd_grad(w, f), 1e-4);
        w.zero_grad();
        g.zero_grad();
        b.zero_grad();
    }
}

TEST_CASE("tensor data validation rejects NaN") {
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, std::nan("")}), NumericError);
}
