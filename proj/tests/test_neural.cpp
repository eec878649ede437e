#include <catch2/catch_amalgamated.hpp>

#include "fpsolve/mlp.hpp"
#include "fpsolve/train.hpp"
#include "oracles.hpp"

using namespace fpsolve;

namespace {

Vec pt(std::initializer_list<double> v) {
    Vec x(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double c : v) x[i++] = c;
    return x;
}

MlpParams zero_net(const std::vector<int>& sizes) {
    auto p = init_params(sizes, 0);
    for (auto& w : p.weights) w.setZero();
    return p;
}

/// Flattened view of all parameters, for finite differencing.
std::vector<double*> param_entries(MlpParams& p) {
    std::vector<double*> out;
    for (auto& w : p.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(w.data() + i);
    for (auto& b : p.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(b.data() + i);
    return out;
}

std::vector<double> grad_entries(const MlpGrads& g) {
    std::vector<double> out;
    for (const auto& w : g.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i) out.push_back(*(w.data() + i));
    for (const auto& b : g.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) out.push_back(*(b.data() + i));
    return out;
}

SdeModel ou2d() {
    return SdeModel("ou2d", 2, [](const Vec& x) { return Vec(-x); },
                    [](const Vec&) { return -2.0; }, Mat::Identity(2, 2),
                    Domain({{-2.0, 2.0}, {-2.0, 2.0}}));
}

}  // namespace

TEST_CASE("init_params is deterministic with zero biases", "[neural]") {
    auto a = init_params({2, 4, 1}, 42);
    auto b = init_params({2, 4, 1}, 42);
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        REQUIRE(a.weights[l] == b.weights[l]);
        REQUIRE(a.biases[l].norm() == 0.0);
        const double bound = std::sqrt(6.0 / (a.layer_sizes[l] + a.layer_sizes[l + 1]));
        REQUIRE(a.weights[l].cwiseAbs().maxCoeff() <= bound);
    }
    auto c = init_params({2, 4, 1}, 43);
    REQUIRE(a.weights[0] != c.weights[0]);
}

TEST_CASE("forward basics", "[neural]") {
    auto zero = zero_net({2, 4, 1});
    REQUIRE(forward(zero, pt({0.3, -0.7})) == 0.5);

    // single layer [1,1]: sigmoid(w x + b)
    auto tiny = init_params({1, 1}, 7);
    tiny.weights[0](0, 0) = 1.0;
    tiny.biases[0][0] = 0.0;
    REQUIRE(forward(tiny, pt({0.0})) == 0.5);
    REQUIRE(forward(tiny, pt({2.0})) == Catch::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));

    // bounded output
    auto p = init_params({3, 8, 1}, 9);
    RngStream rng(1, "fwd");
    for (int i = 0; i < 50; ++i) {
        const double u = forward(p, pt({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)}));
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("forward_jet value matches forward bit-for-bit", "[neural]") {
    auto p = init_params({2, 8, 8, 1}, 11);
    RngStream rng(2, "jet");
    for (int i = 0; i < 20; ++i) {
        Vec x = pt({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        REQUIRE(forward_jet(p, x).value == forward(p, x));
    }
}

TEST_CASE("jet derivatives match finite differences", "[neural]") {
    RngStream rng(3, "jet-fd");
    for (int trial = 0; trial < 100; ++trial) {
        auto p = init_params({2, 6, 5, 1}, 100 + trial);
        Vec x = pt({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        auto jet = forward_jet(p, x);
        auto f = [&](const Vec& y) { return forward(p, y); };
        const Vec gfd = oracles::fd_gradient(f, x);
        const Mat hfd = oracles::fd_hessian(f, x, 1e-4);
        REQUIRE((jet.grad - gfd).norm() <= 1e-6 * std::max(1.0, jet.grad.norm()));
        REQUIRE((jet.hess - hfd).norm() <= 1e-4 * std::max(1.0, jet.hess.norm()));
        REQUIRE(jet.hess.isApprox(jet.hess.transpose(), 1e-13));
    }
    // constant network
    auto zero = zero_net({3, 4, 1});
    auto jet = forward_jet(zero, pt({0.1, 0.2, 0.3}));
    REQUIRE(jet.grad.norm() == 0.0);
    REQUIRE(jet.hess.norm() == 0.0);
}

TEST_CASE("residual basics", "[neural]") {
    // f = 0 and constant network -> residual 0
    auto still = SdeModel("still", 2, [](const Vec& x) { return Vec(Vec::Zero(x.size())); },
                          [](const Vec&) { return 0.0; }, Mat::Identity(2, 2),
                          Domain({{-1.0, 1.0}, {-1.0, 1.0}}));
    auto zero = zero_net({2, 4, 1});
    REQUIRE(residual(still, zero, pt({0.2, 0.4})) == 0.0);

    // residual is linear in the diffusion contribution
    auto p = init_params({2, 6, 1}, 5);
    auto model1 = ou2d();
    auto model2 = SdeModel("ou2d-2x", 2, [](const Vec& x) { return Vec(-x); },
                           [](const Vec&) { return -2.0; },
                           std::sqrt(2.0) * Mat::Identity(2, 2),
                           Domain({{-2.0, 2.0}, {-2.0, 2.0}}));
    const Vec x = pt({0.3, -0.4});
    auto jet = forward_jet(p, x);
    const double drift_part = -(model1.drift_divergence(x) * jet.value + model1.drift(x).dot(jet.grad));
    const double diff1 = residual(model1, p, x) - drift_part;
    const double diff2 = residual(model2, p, x) - drift_part;
    REQUIRE(diff2 == Catch::Approx(2.0 * diff1).epsilon(1e-12));
}

TEST_CASE("keystone: L1 parameter gradient matches finite differences", "[neural]") {
    auto model = ou2d();
    RngStream rng(4, "l1-fd");
    for (int trial = 0; trial < 5; ++trial) {
        auto p = init_params({2, 4, 1}, 50 + trial);
        std::vector<Vec> batch;
        for (int i = 0; i < 3; ++i) batch.push_back(pt({rng.uniform(-1, 1), rng.uniform(-1, 1)}));

        auto [loss, grads] = loss_and_grad_L1(model, p, batch);
        auto analytic = grad_entries(grads);
        auto entries = param_entries(p);
        const double h = 1e-6;
        double num_norm = 0.0, diff_norm = 0.0;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const double saved = *entries[k];
            *entries[k] = saved + h;
            const double up = loss_and_grad_L1(model, p, batch).first;
            *entries[k] = saved - h;
            const double dn = loss_and_grad_L1(model, p, batch).first;
            *entries[k] = saved;
            const double fd = (up - dn) / (2.0 * h);
            num_norm += fd * fd;
            diff_norm += (fd - analytic[k]) * (fd - analytic[k]);
        }
        INFO("trial " << trial << " rel err " << std::sqrt(diff_norm / num_norm));
        REQUIRE(std::sqrt(diff_norm) <= 1e-5 * std::max(1.0, std::sqrt(num_norm)));
    }
}

TEST_CASE("L1 gradient vanishes at a zero-residual point", "[neural]") {
    // constant network and f = 0: residual identically zero, so the gradient
    // of the squared term is zero too
    auto still = SdeModel("still", 2, [](const Vec& x) { return Vec(Vec::Zero(x.size())); },
                          [](const Vec&) { return 0.0; }, Mat::Identity(2, 2),
                          Domain({{-1.0, 1.0}, {-1.0, 1.0}}));
    auto zero = zero_net({2, 5, 1});
    auto [loss, grads] = loss_and_grad_L1(still, zero, {pt({0.1, 0.9})});
    REQUIRE(loss == 0.0);
    for (const auto& w : grads.weights) REQUIRE(w.norm() == 0.0);
    for (const auto& b : grads.biases) REQUIRE(b.norm() == 0.0);
}

TEST_CASE("L1 is invariant under batch permutation", "[neural]") {
    auto model = ou2d();
    auto p = init_params({2, 6, 1}, 8);
    std::vector<Vec> batch = {pt({0.1, 0.2}), pt({-0.5, 0.9}), pt({1.1, -0.3})};
    std::vector<Vec> permuted = {batch[2], batch[0], batch[1]};
    REQUIRE(loss_and_grad_L1(model, p, batch).first ==
            Catch::Approx(loss_and_grad_L1(model, p, permuted).first).epsilon(1e-15));
}

TEST_CASE("L2 gradient matches finite differences and its zero case", "[neural]") {
    RngStream rng(5, "l2-fd");
    auto p = init_params({2, 8, 1}, 31);
    std::vector<Vec> batch;
    std::vector<double> targets;
    for (int i = 0; i < 4; ++i) {
        batch.push_back(pt({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
        targets.push_back(rng.uniform(0.0, 1.0));
    }
    auto [loss, grads] = loss_and_grad_L2(p, batch, targets);
    auto analytic = grad_entries(grads);
    auto entries = param_entries(p);
    const double h = 1e-6;
    double num_norm = 0.0, diff_norm = 0.0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const double saved = *entries[k];
        *entries[k] = saved + h;
        const double up = loss_and_grad_L2(p, batch, targets).first;
        *entries[k] = saved - h;
        const double dn = loss_and_grad_L2(p, batch, targets).first;
        *entries[k] = saved;
        const double fd = (up - dn) / (2.0 * h);
        num_norm += fd * fd;
        diff_norm += (fd - analytic[k]) * (fd - analytic[k]);
    }
    REQUIRE(std::sqrt(diff_norm) <= 1e-6 * std::max(1.0, std::sqrt(num_norm)));

    // exact fit -> zero loss, zero gradient
    std::vector<double> fit;
    for (const Vec& x : batch) fit.push_back(forward(p, x));
    auto [zloss, zgrads] = loss_and_grad_L2(p, batch, fit);
    REQUIRE(zloss == 0.0);
    for (const auto& w : zgrads.weights) REQUIRE(w.norm() == 0.0);
}

TEST_CASE("adam update basics", "[neural]") {
    auto p = init_params({2, 4, 1}, 3);
    auto before = p;
    auto state = make_adam_state(p);
    auto zero = zero_grads(p);
    adam_update(p, zero, state);
    for (std::size_t l = 0; l < p.num_layers(); ++l)
        REQUIRE(p.weights[l] == before.weights[l]);

    // first step moves each coordinate by ~step_size when |g| >> eps
    auto g = zero_grads(p);
    for (auto& w : g.weights) w.setConstant(0.37);
    auto p2 = before;
    auto s2 = make_adam_state(p2);
    adam_update(p2, g, s2);
    for (std::size_t l = 0; l < p2.num_layers(); ++l) {
        const Mat delta = (before.weights[l] - p2.weights[l]).cwiseAbs();
        REQUIRE(delta.maxCoeff() <= 1e-3 + 1e-12);
        REQUIRE(delta.minCoeff() >= 1e-3 * 0.999);
    }

    // rescaling: g and 100 g produce nearly the same first step
    auto g100 = zero_grads(p);
    for (auto& w : g100.weights) w.setConstant(37.0);
    auto p3 = before;
    auto s3 = make_adam_state(p3);
    adam_update(p3, g100, s3);
    for (std::size_t l = 0; l < p3.num_layers(); ++l)
        REQUIRE((p3.weights[l] - p2.weights[l]).cwiseAbs().maxCoeff() < 1e-6 * 1e-3);
}

TEST_CASE("training returns immediately when thresholds are already met", "[neural]") {
    auto model = ou2d();
    auto p = init_params({2, 4, 1}, 17);
    std::vector<Vec> train = {pt({0.0, 0.0}), pt({0.5, 0.5})};
    ReferenceSet ref;
    ref.points = train;
    ref.densities = {forward(p, train[0]), forward(p, train[1])};
    TrainConfig cfg;
    cfg.batch_x = 2;
    cfg.batch_y = 2;
    cfg.budget = 100;
    cfg.l1_threshold = 1e9;  // everything counts as converged
    cfg.l2_threshold = 1e9;
    auto result = train_double_shuffle(model, p, train, ref, cfg);
    REQUIRE(result.converged);
    REQUIRE(result.iterations == 0);
    REQUIRE(result.history.size() == 1);
    for (std::size_t l = 0; l < p.num_layers(); ++l)
        REQUIRE(result.params.weights[l] == p.weights[l]);
}

TEST_CASE("training is seed-deterministic", "[neural]") {
    auto model = ou2d();
    auto p = init_params({2, 8, 1}, 23);
    RngStream rng(6, "train-data");
    std::vector<Vec> train;
    for (int i = 0; i < 64; ++i) train.push_back(pt({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
    ReferenceSet ref;
    for (int i = 0; i < 32; ++i) {
        ref.points.push_back(pt({rng.uniform(-1, 1), rng.uniform(-1, 1)}));
        ref.densities.push_back(0.3);
    }
    TrainConfig cfg;
    cfg.batch_x = 16;
    cfg.batch_y = 8;
    cfg.budget = 50;
    cfg.seed = 99;
    auto a = train_double_shuffle(model, p, train, ref, cfg);
    auto b = train_double_shuffle(model, p, train, ref, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        REQUIRE(a.history[i][0] == b.history[i][0]);
        REQUIRE(a.history[i][1] == b.history[i][1]);
    }
    for (std::size_t l = 0; l < p.num_layers(); ++l)
        REQUIRE(a.params.weights[l] == b.params.weights[l]);
}

TEST_CASE("missing reference densities are excluded", "[neural]") {
    auto model = ou2d();
    auto p = init_params({2, 4, 1}, 29);
    std::vector<Vec> train = {pt({0.0, 0.0}), pt({0.1, 0.1}), pt({0.2, 0.2}), pt({0.3, 0.3})};
    ReferenceSet ref;
    ref.points = train;
    ref.densities = {0.2, missing_density(), 0.3, missing_density()};
    TrainConfig cfg;
    cfg.batch_x = 2;
    cfg.batch_y = 2;  // only valid because exactly 2 densities survive
    cfg.budget = 3;
    auto result = train_double_shuffle(model, p, train, ref, cfg);
    REQUIRE(result.history.size() == 4);
    for (const auto& h : result.history) {
        REQUIRE(std::isfinite(h[0]));
        REQUIRE(std::isfinite(h[1]));
    }
}

TEST_CASE("evaluate_on_grid and slices", "[neural]") {
    auto zero = zero_net({2, 4, 1});
    GridSpec grid(Domain({{-1.0, 1.0}, {-1.0, 1.0}}), 10);
    auto field = evaluate_on_grid(zero, grid);
    for (double v : field.values) REQUIRE(v == 0.5);

    // evaluation is pure
    auto p = init_params({2, 6, 1}, 77);
    auto f1 = evaluate_on_grid(p, grid);
    auto f2 = evaluate_on_grid(p, grid);
    REQUIRE(f1.values == f2.values);

    // slice of a 4D network
    auto p4 = init_params({4, 8, 1}, 78);
    GridSpec slice_grid(Domain({{-2.0, 2.0}, {-2.0, 2.0}}), 12);
    Vec fixed = pt({0.0, 0.0, 0.5, 1.0});
    auto slice = evaluate_slice(p4, slice_grid, 0, 1, fixed);
    REQUIRE(slice.values.size() == 144);
    // spot-check one node against a direct forward call
    std::vector<int> idx = {3, 7};
    Vec x = fixed;
    x[0] = slice_grid.node(idx)[0];
    x[1] = slice_grid.node(idx)[1];
    REQUIRE(slice.at(idx) == forward(p4, x));

    REQUIRE_THROWS_AS(evaluate_on_grid(p4, grid), config_error);
}
