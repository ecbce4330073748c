#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fedcme/nn.hpp"
#include "fedcme/split_model.hpp"

using namespace fedcme;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(gen);
    return t;
}

// |a - b| <= tol * max(1, |b|), reported as the worst entry over a bundle.
double max_rel_err(const GradBundle& got, const GradBundle& want) {
    double worst = 0.0;
    REQUIRE(got.grads.size() == want.grads.size());
    for (std::size_t t = 0; t < got.grads.size(); ++t) {
        REQUIRE(got.grads[t].same_shape(want.grads[t]));
        for (std::size_t i = 0; i < got.grads[t].size(); ++i) {
            const double denom = std::max(1.0, std::abs(want.grads[t][i]));
            worst = std::max(worst, std::abs(got.grads[t][i] - want.grads[t][i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::infinity()}), ValidationError);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.at(1, 0) == 3.0);
}

TEST_CASE("linear_forward worked examples") {
    LinearLayer identity(Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2}, {0, 0}));
    Tensor x({1, 2}, {1, 2});
    Tensor y = linear_forward(x, identity);
    CHECK(y.at(0, 0) == 1.0);
    CHECK(y.at(0, 1) == 2.0);

    LinearLayer biased(Tensor({2, 2}, {5, -3, 2, 7}), Tensor({2}, {3, 4}));
    Tensor zero({1, 2}, {0, 0});
    Tensor b = linear_forward(zero, biased);
    CHECK(b.at(0, 0) == 3.0);
    CHECK(b.at(0, 1) == 4.0);

    LinearLayer single(Tensor({1, 2}, {2, 3}), Tensor({1}, {1}));
    Tensor ones({1, 2}, {1, 1});
    CHECK(linear_forward(ones, single).at(0, 0) == 6.0);

    CHECK_THROWS_AS(linear_forward(Tensor({1, 3}, {1, 2, 3}), identity), DimensionError);
}

TEST_CASE("relu forward and backward") {
    Tensor x({1, 3}, {-1, 0, 2});
    Tensor y = relu(x);
    CHECK(y.data() == std::vector<double>{0, 0, 2});

    Tensor xb({1, 2}, {-1, 2});
    Tensor up({1, 2}, {5, 5});
    CHECK(relu_backward(xb, up).data() == std::vector<double>{0, 5});

    Tensor pos({1, 3}, {1, 2, 3});
    CHECK(relu(pos) == pos);
    CHECK(relu_backward(pos, up = Tensor({1, 3}, {7, 8, 9})) == up);
}

TEST_CASE("softmax cross entropy worked examples") {
    auto [loss_uniform, d_uniform] = softmax_cross_entropy(Tensor({1, 2}, {0, 0}), {0});
    CHECK(loss_uniform == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto [loss_sat, d_sat] = softmax_cross_entropy(Tensor({1, 2}, {100, 0}), {0});
    CHECK(loss_sat == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(d_sat.at(0, 0)) < 1e-12);
    CHECK(std::abs(d_sat.at(0, 1)) < 1e-12);

    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({1, 2}, {0, 0}), {2}), ValidationError);
}

TEST_CASE("softmax rows sum to one, dlogits rows sum to zero") {
    const Tensor logits = random_tensor({5, 7}, 11, -4.0, 4.0);
    const Tensor p = softmax(logits);
    const auto [loss, dlogits] = softmax_cross_entropy(logits, {0, 1, 2, 3, 4});
    for (std::size_t b = 0; b < 5; ++b) {
        double psum = 0.0, dsum = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            psum += p.at(b, c);
            dsum += dlogits.at(b, c);
        }
        CHECK(std::abs(psum - 1.0) <= 1e-12);
        CHECK(std::abs(dsum) <= 1e-12);
    }
}

TEST_CASE("cross entropy gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Tensor logits = random_tensor({3, 4}, seed, -2.0, 2.0);
        const std::vector<int> labels = {static_cast<int>(seed % 4), 1, 3};
        auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
        GradBundle analytic;
        analytic.grads.push_back(dlogits);
        std::vector<Tensor*> params = {&logits};
        const GradBundle fd = finite_difference_grad(
            [&] { return softmax_cross_entropy(logits, labels).first; }, params, 1e-5);
        CHECK(max_rel_err(analytic, fd) < 1e-6);
    }
}

TEST_CASE("l2 feature loss worked examples") {
    PerClassFeatures zeta(2, 2);
    zeta.set[0] = zeta.set[1] = 1;
    zeta.values.at(0, 0) = 0.25;
    zeta.values.at(0, 1) = -0.5;
    zeta.values.at(1, 0) = 1.0;
    zeta.values.at(1, 1) = 2.0;

    // batch means exactly equal to the global features -> zero everywhere
    Tensor aligned({4, 2}, {0.5, -1.0, 0.0, 0.0,   // class 0 mean = (0.25, -0.5)
                            1.5, 2.5, 0.5, 1.5});  // class 1 mean = (1.0, 2.0)
    auto [zero_loss, zero_grad] = l2_feature_loss(aligned, {0, 0, 1, 1}, zeta);
    CHECK(zero_loss == 0.0);
    for (std::size_t i = 0; i < zero_grad.size(); ++i) CHECK(zero_grad[i] == 0.0);

    PerClassFeatures origin(1, 2);
    origin.set[0] = 1;
    auto [unit_loss, unit_grad] = l2_feature_loss(Tensor({1, 2}, {1, 0}), {0}, origin);
    CHECK(unit_loss == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(unit_grad.at(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(unit_grad.at(0, 1) == 0.0);

    PerClassFeatures wrong_dim(1, 3);
    wrong_dim.set[0] = 1;
    CHECK_THROWS_AS(l2_feature_loss(Tensor({1, 2}, {1, 0}), {0}, wrong_dim), DimensionError);
}

TEST_CASE("l2 feature loss skips classes with unset global feature") {
    PerClassFeatures zeta(2, 2);
    zeta.set[1] = 1;  // class 0 never aggregated
    Tensor features({2, 2}, {5, 5, 1, 1});
    auto [loss, grad] = l2_feature_loss(features, {0, 1}, zeta);
    // only class 1 contributes: ||(1,1) - (0,0)||^2 = 2, members get 2*diff
    CHECK(loss == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(grad.at(0, 0) == 0.0);
    CHECK(grad.at(0, 1) == 0.0);
    CHECK(grad.at(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("l2 feature loss zero iff aligned") {
    PerClassFeatures zeta(2, 3);
    zeta.set[0] = zeta.set[1] = 1;
    for (std::size_t i = 0; i < zeta.values.size(); ++i) zeta.values[i] = 0.1 * double(i);
    Tensor features({4, 3});
    const std::vector<int> labels = {0, 1, 0, 1};
    for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t f = 0; f < 3; ++f) {
            features.at(b, f) = zeta.values.at(static_cast<std::size_t>(labels[b]), f);
        }
    }
    CHECK(l2_feature_loss(features, labels, zeta).first == 0.0);
    features.at(2, 1) += 1e-3;  // perturb one member of class 0
    CHECK(l2_feature_loss(features, labels, zeta).first > 0.0);
}

TEST_CASE("l2 feature loss gradient matches finite differences") {
    for (std::uint64_t seed = 21; seed <= 25; ++seed) {
        Tensor features = random_tensor({5, 3}, seed);
        const std::vector<int> labels = {0, 1, 1, 2, 0};
        PerClassFeatures zeta(4, 3);  // class 3 absent from batch, class 2 unset
        zeta.set[0] = zeta.set[1] = zeta.set[3] = 1;
        zeta.values = random_tensor({4, 3}, seed + 100);

        auto [loss, dfeat] = l2_feature_loss(features, labels, zeta);
        GradBundle analytic;
        analytic.grads.push_back(dfeat);
        std::vector<Tensor*> params = {&features};
        const GradBundle fd = finite_difference_grad(
            [&] { return l2_feature_loss(features, labels, zeta).first; }, params, 1e-5);
        CHECK(max_rel_err(analytic, fd) < 1e-6);
    }
}

TEST_CASE("sgd step") {
    Tensor p({1}, {1.0});
    GradBundle g;
    g.grads.push_back(Tensor({1}, {2.0}));
    sgd_step({&p}, g, 0.5);
    CHECK(p[0] == 0.0);

    Tensor q = random_tensor({2, 2}, 3);
    const Tensor q_before = q;
    GradBundle zero;
    zero.grads.push_back(Tensor({2, 2}));
    sgd_step({&q}, zero, 0.01);
    CHECK(q == q_before);

    GradBundle g2;
    g2.grads.push_back(random_tensor({2, 2}, 4));
    sgd_step({&q}, g2, 0.0);  // eta = 0 is the identity
    CHECK(q == q_before);

    GradBundle bad;
    bad.grads.push_back(Tensor({3}));
    CHECK_THROWS_AS(sgd_step({&q}, bad, 0.1), DimensionError);
}

TEST_CASE("finite difference oracle sanity") {
    Tensor p({1}, {3.0});
    std::vector<Tensor*> params = {&p};
    GradBundle g = finite_difference_grad([&] { return p[0] * p[0]; }, params, 1e-5);
    CHECK(g.grads[0][0] == doctest::Approx(6.0).epsilon(1e-6));

    GradBundle c = finite_difference_grad([] { return 42.0; }, params, 1e-5);
    CHECK(c.grads[0][0] == 0.0);
}

TEST_CASE("full split model objective gradient matches finite differences") {
    for (std::uint64_t seed = 31; seed <= 34; ++seed) {
        SplitModel m = make_split_model(4, {6, 3}, 3, seed);
        const Tensor x = random_tensor({5, 4}, seed + 50);
        const std::vector<int> labels = {0, 2, 1, 1, 0};
        PerClassFeatures zeta(3, 3);
        zeta.set[0] = zeta.set[1] = 1;
        zeta.values = random_tensor({3, 3}, seed + 60, -0.5, 0.5);
        const double mu = 0.7;

        auto objective = [&] {
            const Tensor features = forward_features(m, x);
            const Tensor logits = forward_logits(m, features);
            return softmax_cross_entropy(logits, labels).first +
                   mu * l2_feature_loss(features, labels, zeta).first;
        };

        ForwardCache cache;
        const Tensor features = forward_features(m, x, cache);
        auto [ce, dlogits] = softmax_cross_entropy(forward_logits(m, features), labels);
        auto [l2, dfeat] = l2_feature_loss(features, labels, zeta);
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] *= mu;
        const GradBundle analytic = backward(m, cache, features, dlogits, dfeat);

        const GradBundle fd = finite_difference_grad(objective, m.param_tensors(), 1e-5);
        CHECK(max_rel_err(analytic, fd) < 1e-5);
    }
}
