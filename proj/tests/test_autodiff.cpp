#include <doctest.h>

#include <cmath>

#include "roadtagger/autodiff.hpp"
#include "roadtagger/errors.hpp"
#include "test_helpers.hpp"

using namespace roadtagger;

namespace {

// Flatten tensors into one coordinate vector for the independent oracle.
std::vector<double> flatten(const std::vector<Tensor>& tensors) {
    std::vector<double> out;
    for (const auto& t : tensors) out.insert(out.end(), t.data(), t.data() + t.size());
    return out;
}

std::vector<Tensor> unflatten(const std::vector<Tensor>& like, const std::vector<double>& x) {
    std::vector<Tensor> out = like;
    std::size_t at = 0;
    for (auto& t : out)
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = x[at++];
    return out;
}

using Expr = std::function<Var(Tape&, const std::vector<Var>&)>;

// Checks tape gradients of a scalar expression against central differences.
void check_against_oracle(const std::vector<Tensor>& inputs, const Expr& expr,
                          double tol = 1e-5) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    Var loss = expr(tape, vars);
    tape.backward(loss);
    std::vector<double> analytic;
    for (Var v : vars) {
        const Tensor g = tape.grad(v);
        analytic.insert(analytic.end(), g.data(), g.data() + g.size());
    }

    const auto oracle = test_util::central_differences(
        [&](const std::vector<double>& x) {
            Tape t2;
            std::vector<Var> vs;
            for (const auto& t : unflatten(inputs, x)) vs.push_back(t2.input(t));
            return t2.value(expr(t2, vs)).item();
        },
        flatten(inputs));

    REQUIRE(analytic.size() == oracle.size());
    for (std::size_t i = 0; i < analytic.size(); ++i)
        CHECK_MESSAGE(test_util::close_rel(analytic[i], oracle[i], tol),
                      "coordinate " << i << ": " << analytic[i] << " vs " << oracle[i]);
}

Var scalarize(Tape& tape, Var x) {
    Var sums = tape.row_sum(x);
    std::vector<int> all(static_cast<std::size_t>(tape.value(sums).rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return tape.mean_rows(sums, {all});
}

}  // namespace

TEST_CASE("softmax of a symmetric row is uniform and rows sum to one") {
    Tape tape;
    Var x = tape.input(Tensor({1, 2}, {0.0, 0.0}));
    Var y = tape.softmax_rows(x);
    CHECK(tape.value(y).at(0, 0) == doctest::Approx(0.5));
    CHECK(tape.value(y).at(0, 1) == doctest::Approx(0.5));

    std::mt19937_64 rng(3);
    for (int round = 0; round < 10; ++round) {
        Tape t;
        Var probs = t.softmax_rows(t.input(test_util::random_tensor({5, 7}, rng, -4, 4)));
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 7; ++c) sum += t.value(probs).at(r, c);
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("mean_rows over chosen rows matches arithmetic") {
    Tape tape;
    Var x = tape.input(Tensor({4, 1}, {1, 2, 3, 4}));
    Var m = tape.mean_rows(x, {{1, 3}});
    CHECK(tape.value(m).at(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("mean_rows with a singleton group copies the row") {
    std::mt19937_64 rng(5);
    const Tensor x = test_util::random_tensor({6, 4}, rng);
    Tape tape;
    Var m = tape.mean_rows(tape.input(x), {{3}});
    for (int c = 0; c < 4; ++c) CHECK(tape.value(m).at(0, c) == x.at(3, c));
}

TEST_CASE("mean_rows with an empty group yields a zero row") {
    std::mt19937_64 rng(6);
    Tape tape;
    Var m = tape.mean_rows(tape.input(test_util::random_tensor({3, 4}, rng)), {{}, {0, 1}});
    for (int c = 0; c < 4; ++c) CHECK(tape.value(m).at(0, c) == 0.0);
}

TEST_CASE("cross entropy of a softmax probability 1/4 is ln 4") {
    // logits chosen so the true class has softmax probability 0.25
    Tape tape;
    Var logits = tape.input(Tensor({1, 4}, {0.0, 0.0, 0.0, 0.0}));
    Var ce = tape.cross_entropy(logits, {2});
    CHECK(tape.value(ce).at(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy is non-negative") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round) {
        Tape tape;
        Var logits = tape.input(test_util::random_tensor({4, 5}, rng, -5, 5));
        Var ce = tape.cross_entropy(logits, {0, 1, 2, 3});
        for (int r = 0; r < 4; ++r) CHECK(tape.value(ce).at(r, 0) >= 0.0);
    }
}

TEST_CASE("backward of sum of squares gives 2w") {
    Tape tape;
    Var w = tape.input(Tensor({1, 2}, {1.0, 2.0}));
    Var loss = scalarize(tape, tape.mul(w, w));
    tape.backward(loss);
    const Tensor g = tape.grad(w);
    CHECK(g.at(0, 0) == doctest::Approx(2.0));
    CHECK(g.at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("stop_gradient is a forward identity with zero gradient") {
    std::mt19937_64 rng(9);
    const Tensor x = test_util::random_tensor({3, 3}, rng);
    Tape tape;
    Var a = tape.input(x);
    Var s = tape.stop_gradient(a);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(tape.value(s).data()[i] == x.data()[i]);
    tape.backward(scalarize(tape, s));
    const Tensor g = tape.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.data()[i] == 0.0);
}

TEST_CASE("a + stop_gradient(a) has gradient one, not two") {
    Tape tape;
    Var a = tape.input(Tensor({1, 1}, {0.7}));
    Var mixed = tape.add(a, tape.stop_gradient(a));
    tape.backward(scalarize(tape, mixed));
    CHECK(tape.grad(a).at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("parameter gradients accumulate through the tape") {
    Parameter p;
    p.name = "w";
    p.value = Tensor({1, 2}, {3.0, -1.0});
    p.grad = Tensor::zeros({1, 2});
    Tape tape;
    Var w = tape.param(p);
    Var reused = tape.add(w, w);  // parameter used twice
    tape.backward(scalarize(tape, reused));
    CHECK(p.grad.at(0, 0) == doctest::Approx(2.0));
    CHECK(p.grad.at(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("every differentiable op matches the finite-difference oracle") {
    std::mt19937_64 rng(41);
    for (int instance = 0; instance < 20; ++instance) {
        std::uniform_int_distribution<int> dim(1, 8);
        const int n = dim(rng), k = dim(rng), m = dim(rng);
        const Tensor wnm = test_util::random_tensor({n, m}, rng);

        check_against_oracle({test_util::random_tensor({n, k}, rng),
                              test_util::random_tensor({k, m}, rng)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(t, t.mul(t.matmul(v[0], v[1]),
                                                           t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng),
                              test_util::random_tensor({1, m}, rng)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(t, t.mul(t.add(v[0], v[1]), t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng),
                              test_util::random_tensor({n, m}, rng)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(t, t.mul(t.sub(v[0], v[1]), t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng, -3, 3)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(
                                     t, t.mul(t.sigmoid(t.scale(v[0], 1.3)), t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng, -3, 3)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(t, t.mul(t.tanh(v[0]), t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng, 0.1, 2.0)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 // inputs bounded away from the relu kink
                                 return scalarize(t, t.mul(t.relu(v[0]), t.constant(wnm)));
                             });
        check_against_oracle({test_util::random_tensor({n, m}, rng, -2, 2)},
                             [&](Tape& t, const std::vector<Var>& v) {
                                 return scalarize(
                                     t, t.mul(t.softmax_rows(v[0]), t.constant(wnm)));
                             });
        {
            std::vector<int> classes(static_cast<std::size_t>(n));
            std::uniform_int_distribution<int> cls(0, m - 1);
            for (auto& c : classes) c = cls(rng);
            check_against_oracle({test_util::random_tensor({n, m}, rng, -2, 2)},
                                 [&](Tape& t, const std::vector<Var>& v) {
                                     return scalarize(t, t.cross_entropy(v[0], classes));
                                 });
        }
        {
            std::vector<std::vector<int>> groups(3);
            std::uniform_int_distribution<int> row(0, n - 1);
            for (auto& g : groups) {
                const int count = std::uniform_int_distribution<int>(0, 3)(rng);
                for (int i = 0; i < count; ++i) g.push_back(row(rng));
                std::sort(g.begin(), g.end());
                g.erase(std::unique(g.begin(), g.end()), g.end());
            }
            check_against_oracle({test_util::random_tensor({n, m}, rng)},
                                 [&](Tape& t, const std::vector<Var>& v) {
                                     return scalarize(t, t.mean_rows(v[0], groups));
                                 });
        }
        {
            const int chunks = 1 + instance % 3;
            check_against_oracle({test_util::random_tensor({n, m * chunks}, rng)},
                                 [&](Tape& t, const std::vector<Var>& v) {
                                     return scalarize(
                                         t, t.slice_chunk(v[0], instance % chunks, chunks));
                                 });
            check_against_oracle({test_util::random_tensor({n, m}, rng),
                                  test_util::random_tensor({n, k}, rng)},
                                 [&](Tape& t, const std::vector<Var>& v) {
                                     return scalarize(t, t.concat_cols({v[0], v[1]}));
                                 });
        }
    }
}

TEST_CASE("shape mismatches raise errors naming the op") {
    Tape tape;
    Var a = tape.input(Tensor({2, 3}));
    Var b = tape.input(Tensor({2, 3}));
    CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("matmul"), ShapeError);
    Var c = tape.input(Tensor({4, 1}));
    CHECK_THROWS_WITH_AS(tape.mul(a, c), doctest::Contains("elementwise_mul"), ShapeError);
    CHECK_THROWS_AS(tape.slice_chunk(a, 0, 2), ShapeError);
    CHECK_THROWS_AS(tape.cross_entropy(a, {0}), ShapeError);
    CHECK_THROWS_AS(tape.mean_rows(a, {{7}}), ShapeError);
}

TEST_CASE("backward requires a recorded scalar loss") {
    Tape empty;
    CHECK_THROWS_AS(empty.backward(Var{0}), ShapeError);
    Tape tape;
    Var a = tape.input(Tensor({2, 2}));
    CHECK_THROWS_AS(tape.backward(a), ShapeError);
}

TEST_CASE("non-finite forward values are a hard error") {
    Tape tape;
    CHECK_THROWS_AS(tape.input(Tensor({1, 2}, {1.0, std::nan("1")})), NumericError);
    Var big = tape.input(Tensor({1, 1}, {1e308}));
    CHECK_THROWS_AS(tape.add(big, big), NumericError);
}

TEST_CASE("glorot initialization respects the bound and the seed") {
    const Tensor t = glorot_uniform({4, 4}, 12);
    const double limit = std::sqrt(6.0 / 8.0);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::fabs(t.data()[i]) <= limit);

    const Tensor again = glorot_uniform({4, 4}, 12);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == again.data()[i]);

    const Tensor other = glorot_uniform({4, 4}, 13);
    bool any_diff = false;
    for (std::size_t i = 0; i < t.size(); ++i) any_diff = any_diff || t.data()[i] != other.data()[i];
    CHECK(any_diff);
}

TEST_CASE("glorot draws are centered") {
    const Tensor t = glorot_uniform({1000, 100}, 77);  // 1e5 draws
    double mean = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) mean += t.data()[i];
    mean /= static_cast<double>(t.size());
    CHECK(std::fabs(mean) < 0.01);
}

TEST_CASE("forward values are bit-identical across repeated runs") {
    std::mt19937_64 rng(55);
    const Tensor a = test_util::random_tensor({5, 6}, rng);
    const Tensor b = test_util::random_tensor({6, 4}, rng);
    auto run = [&]() {
        Tape tape;
        Var y = tape.softmax_rows(tape.matmul(tape.input(a), tape.input(b)));
        return tape.value(y);
    };
    const Tensor first = run(), second = run();
    for (std::size_t i = 0; i < first.size(); ++i)
        CHECK(first.data()[i] == second.data()[i]);
}
