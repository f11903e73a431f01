#include <stdexcept>
#include <cmath>
#include <random>

#include "doctest.h"
#include "tvc/data.hpp"
#include "tvc/merge.hpp"
#include "tvc/metrics.hpp"
#include "tvc/train.hpp"

using namespace tvc;
using namespace tvc::merge;

namespace {

// A flat n-vector wrapped as a single weight entry.
nn::ParamVector flat(std::vector<double> values) {
    nn::ParamVector p;
    p.shape_map = {{"w", nn::ParamKind::weight, values.size(), 1}};
    p.values = std::move(values);
    return p;
}

TaskVector tau_of(std::vector<double> values, std::string id = "t") {
    TaskVector tv;
    tv.delta = flat(std::move(values));
    tv.task_id = std::move(id);
    return tv;
}

nn::ParamVector random_flat(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return flat(std::move(v));
}

}  // namespace

TEST_CASE("task vector construction and roundtrip") {
    nn::ParamVector pre = flat({1.0, 2.0, 3.0});
    nn::ParamVector post = flat({1.5, 1.0, 3.0});

    TaskVector same = compute_task_vector(pre, pre, "same");
    for (double v : same.delta.values) CHECK(v == 0.0);

    nn::ParamVector zero = flat({0.0, 0.0, 0.0});
    TaskVector from_zero = compute_task_vector(post, zero, "z");
    CHECK(from_zero.delta.values == post.values);

    TaskVector tv = compute_task_vector(post, pre, "t0");
    nn::ParamVector back = pre + tv.delta;
    CHECK(back.values == post.values);
    CHECK(tv.task_id == "t0");

    nn::ParamVector other = flat({1.0, 2.0});
    CHECK_THROWS_AS(compute_task_vector(post, other, "bad"), std::invalid_argument);
}

TEST_CASE("uniform merge averages the task vectors") {
    nn::ParamVector pre = flat({0.0, 0.0});
    std::vector<TaskVector> taus = {tau_of({2.0, 0.0}), tau_of({0.0, 2.0})};
    nn::ParamVector merged = merge_uniform(pre, taus);
    CHECK(merged.values == std::vector<double>{1.0, 1.0});

    std::vector<TaskVector> identical = {tau_of({1.0, -3.0}), tau_of({1.0, -3.0}),
                                         tau_of({1.0, -3.0})};
    nn::ParamVector same = merge_uniform(pre, identical);
    CHECK(same.values[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(same.values[1] == doctest::Approx(-3.0).epsilon(1e-15));

    nn::ParamVector single = merge_uniform(pre, {tau_of({5.0, 7.0})});
    CHECK(single.values == std::vector<double>{5.0, 7.0});

    CHECK_THROWS_AS(merge_uniform(pre, {}), std::invalid_argument);
}

TEST_CASE("task arithmetic endpoints") {
    nn::ParamVector pre = flat({1.0, -1.0});
    std::vector<TaskVector> taus = {tau_of({2.0, 4.0})};
    nn::ParamVector at0 = merge_task_arithmetic(pre, taus, 0.0);
    CHECK(at0.values == pre.values);
    nn::ParamVector at1 = merge_task_arithmetic(pre, taus, 1.0);
    CHECK(at1.values == std::vector<double>{3.0, 3.0});
}

TEST_CASE("task arithmetic sum is dominated by the large task vector") {
    nn::ParamVector pre = flat({0.0, 0.0});
    std::vector<TaskVector> taus = {tau_of({1.0, 0.0}), tau_of({0.0, 10.0})};
    nn::ParamVector merged = merge_task_arithmetic(pre, taus, 1.0);
    std::vector<double> sum = merged.values;
    CHECK(linalg::cosine_similarity(sum, taus[1].delta.values) ==
          doctest::Approx(10.0 / std::sqrt(101.0)).epsilon(1e-14));
    CHECK(linalg::cosine_similarity(sum, taus[0].delta.values) ==
          doctest::Approx(1.0 / std::sqrt(101.0)).epsilon(1e-14));
}

TEST_CASE("task arithmetic delta is exactly lambda-homogeneous") {
    nn::ParamVector pre = random_flat(24, 1);
    std::vector<TaskVector> taus;
    for (std::uint64_t s = 0; s < 3; ++s) {
        TaskVector tv;
        tv.delta = random_flat(24, 10 + s);
        taus.push_back(std::move(tv));
    }
    nn::ParamVector base = merge_task_arithmetic(pre, taus, 0.2);
    nn::ParamVector scaled = merge_task_arithmetic(pre, taus, 0.6);
    for (std::size_t i = 0; i < 24; ++i) {
        double d1 = base.values[i] - pre.values[i];
        double d3 = scaled.values[i] - pre.values[i];
        CHECK(d3 == doctest::Approx(3.0 * d1).epsilon(1e-12));
    }
}

TEST_CASE("ties trims, elects signs, and averages the agreeing survivors") {
    nn::ParamVector pre = flat({0.0, 0.0});
    std::vector<TaskVector> taus = {tau_of({3.0, 0.1}), tau_of({-2.0, 0.2})};
    nn::ParamVector merged = merge_ties(pre, taus, 1.0, 0.5);
    // Survivors at coordinate 0: {3, -2}; elected sign +; agreeing mean 3.
    // Coordinate 1 loses both entries to the trim.
    CHECK(merged.values[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(merged.values[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("ties with a single task and full keep is task arithmetic") {
    nn::ParamVector pre = flat({1.0, 2.0, 3.0});
    std::vector<TaskVector> taus = {tau_of({0.5, -0.25, 4.0})};
    nn::ParamVector t = merge_ties(pre, taus, 0.7, 1.0);
    nn::ParamVector ta = merge_task_arithmetic(pre, taus, 0.7);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(t.values[i] == doctest::Approx(ta.values[i]).epsilon(1e-15));
}

TEST_CASE("ties is odd under negating every task vector") {
    nn::ParamVector pre = flat(std::vector<double>(12, 0.0));
    std::vector<TaskVector> taus;
    std::vector<TaskVector> negated;
    for (std::uint64_t s = 0; s < 3; ++s) {
        nn::ParamVector d = random_flat(12, 40 + s);
        TaskVector tv;
        tv.delta = d;
        taus.push_back(tv);
        tv.delta = d * -1.0;
        negated.push_back(tv);
    }
    nn::ParamVector plus = merge_ties(pre, taus, 0.9, 0.4);
    nn::ParamVector minus = merge_ties(pre, negated, 0.9, 0.4);
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(plus.values[i] == doctest::Approx(-minus.values[i]).epsilon(1e-15));
}

TEST_CASE("ties on sign-aligned full-keep inputs averages like scaled task arithmetic") {
    // Every coordinate agrees in sign and nothing is trimmed, so the
    // agreeing average equals the plain mean: TIES(lambda) == TA(lambda / T).
    nn::ParamVector pre = flat({0.0, 0.0, 0.0});
    std::vector<TaskVector> taus = {tau_of({1.0, -2.0, 3.0}), tau_of({3.0, -4.0, 5.0})};
    nn::ParamVector t = merge_ties(pre, taus, 1.0, 1.0);
    nn::ParamVector ta = merge_task_arithmetic(pre, taus, 0.5);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(t.values[i] == doctest::Approx(ta.values[i]).epsilon(1e-15));
    CHECK(t.values[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("ties mask density follows the keep fraction") {
    std::vector<TaskVector> taus = {tau_of({1, 2, 3, 4, 5, 6, 7, 8, 9, 10})};
    auto masks = ties_masks(taus, 0.3);
    REQUIRE(masks.size() == 1);
    CHECK(masks[0].count() == 3);
    CHECK(masks[0].density() == doctest::Approx(0.3));
    // The three largest magnitudes survive.
    CHECK(masks[0].bits[9] == 1);
    CHECK(masks[0].bits[8] == 1);
    CHECK(masks[0].bits[7] == 1);
    CHECK(masks[0].bits[0] == 0);
}

TEST_CASE("consensus with one task and tiny weight reduces to task arithmetic") {
    nn::ParamVector pre = flat({0.5, -0.5});
    std::vector<TaskVector> taus = {tau_of({1.0, -2.0})};
    nn::ParamVector c = merge_consensus(pre, taus, 0.8, 1e-9, 1);
    nn::ParamVector ta = merge_task_arithmetic(pre, taus, 0.8);
    CHECK(c.values == ta.values);

    auto masks = consensus_masks(taus, 1e-9, 1);
    CHECK(masks.consensus.count() == 2);
}

TEST_CASE("consensus masks out a coordinate only one task cares about") {
    nn::ParamVector pre = flat({0.0, 0.0});
    std::vector<TaskVector> taus = {tau_of({5.0, 0.1}), tau_of({0.2, 0.1})};
    // Coordinate 0: task 0 passes (5 >= 0.2) but task 1 fails (0.2 < 5), so
    // only one vote. Coordinate 1: both pass (0.1 >= 0.1), two votes.
    nn::ParamVector c = merge_consensus(pre, taus, 1.0, 1.0, 2);
    CHECK(c.values[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(c.values[1] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("consensus with an unsatisfiable vote threshold returns the base model") {
    nn::ParamVector pre = flat({1.0, 2.0});
    std::vector<TaskVector> taus = {tau_of({1.0, 1.0}), tau_of({1.0, 1.0})};
    nn::ParamVector c = merge_consensus(pre, taus, 1.0, 1.0, 3);
    CHECK(c.values == pre.values);
}

TEST_CASE("tsvm with a single full-rank task recovers task arithmetic") {
    nn::ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {};
    spec.num_classes = 4;
    nn::ParamVector pre = nn::he_uniform_init(spec, 1);
    TaskVector tv;
    tv.delta = nn::he_uniform_init(spec, 2);
    // Give the bias a nonzero delta too (it bypasses to plain summing).
    for (std::size_t i = pre.offset_of(1); i < tv.delta.dim(); ++i) tv.delta.values[i] = 0.1;

    MergeConfig cfg;
    cfg.method = Method::tsvm;
    cfg.tsvm_rank_policy = TsvmRankPolicy::full;
    std::vector<std::string> warnings;
    nn::ParamVector merged = merge_tsvm(pre, {tv}, 0.6, cfg, &warnings);
    nn::ParamVector expect = merge_task_arithmetic(pre, {tv}, 0.6);
    for (std::size_t i = 0; i < merged.dim(); ++i)
        CHECK(merged.values[i] == doctest::Approx(expect.values[i]).epsilon(1e-8));
}

TEST_CASE("tsvm adds tasks with orthogonal singular subspaces exactly") {
    nn::ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {};
    spec.num_classes = 4;
    nn::ParamVector pre = nn::zeros_like(spec);

    // Block-diagonal deltas: task 0 lives on rows/cols {0,1}, task 1 on
    // rows/cols {2,3}; their stacked factors are already orthonormal.
    TaskVector t0;
    t0.delta = nn::zeros_like(spec);
    linalg::DenseMatrix w0(4, 4);
    w0.at(0, 0) = 1.0;
    w0.at(0, 1) = 2.0;
    w0.at(1, 0) = -1.0;
    w0.at(1, 1) = 1.5;
    nn::set_layer_matrix(t0.delta, 0, w0);

    TaskVector t1;
    t1.delta = nn::zeros_like(spec);
    linalg::DenseMatrix w1(4, 4);
    w1.at(2, 2) = 0.5;
    w1.at(2, 3) = -2.0;
    w1.at(3, 2) = 1.0;
    w1.at(3, 3) = 3.0;
    nn::set_layer_matrix(t1.delta, 0, w1);

    MergeConfig cfg;
    cfg.method = Method::tsvm;
    nn::ParamVector merged = merge_tsvm(pre, {t0, t1}, 0.5, cfg);
    nn::ParamVector expect = merge_task_arithmetic(pre, {t0, t1}, 0.5);
    for (std::size_t i = 0; i < merged.dim(); ++i)
        CHECK(merged.values[i] == doctest::Approx(expect.values[i]).epsilon(1e-6));
}

TEST_CASE("tsvm whitening produces orthonormal stacked factors") {
    // Replicates the whitening step on a two-task stack and checks the
    // orthonormality residual directly.
    std::mt19937_64 rng(123);
    std::normal_distribution<double> dist(0.0, 1.0);
    linalg::DenseMatrix stack(8, 4);
    for (std::uint64_t t = 0; t < 2; ++t) {
        linalg::DenseMatrix m(8, 2);
        for (double& v : m.data) v = dist(rng);
        linalg::SvdResult svd = linalg::svd_thin(m);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 2; ++j) stack.at(i, t * 2 + j) = svd.u.at(i, j);
    }
    linalg::DenseMatrix gram = linalg::matmul(linalg::transpose(stack), stack);
    linalg::DenseMatrix white = linalg::matmul(stack, linalg::inverse_sqrt_spd(gram, 1e-10));
    linalg::DenseMatrix check = linalg::matmul(linalg::transpose(white), white);
    linalg::DenseMatrix resid = linalg::add(check, linalg::scale(linalg::identity(4), -1.0));
    CHECK(linalg::max_abs(resid) < 1e-6);
}

TEST_CASE("tsvm warns when the whitening Gram matrix is rank deficient") {
    nn::ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {};
    spec.num_classes = 4;
    nn::ParamVector pre = nn::zeros_like(spec);
    TaskVector tv;
    tv.delta = nn::he_uniform_init(spec, 3);
    // Two identical tasks stack collinear factors.
    MergeConfig cfg;
    cfg.method = Method::tsvm;
    std::vector<std::string> warnings;
    nn::ParamVector merged = merge_tsvm(pre, {tv, tv}, 0.5, cfg, &warnings);
    CHECK(!warnings.empty());
    for (double v : merged.values) CHECK(std::isfinite(v));
}

TEST_CASE("every merge method preserves shape and finiteness") {
    nn::ModelSpec spec;
    spec.input_dim = 6;
    spec.hidden_dims = {8};
    spec.num_classes = 3;
    nn::ParamVector pre = nn::he_uniform_init(spec, 9);
    std::vector<TaskVector> taus;
    for (std::uint64_t s = 0; s < 3; ++s) {
        TaskVector tv;
        tv.delta = nn::he_uniform_init(spec, 20 + s);
        tv.task_id = "task" + std::to_string(s);
        taus.push_back(std::move(tv));
    }
    for (Method m : all_methods()) {
        MergeConfig cfg;
        cfg.method = m;
        nn::ParamVector merged = merge_with(pre, taus, cfg, 0.4);
        CHECK(merged.shape_map == pre.shape_map);
        for (double v : merged.values) CHECK(std::isfinite(v));
    }
}

TEST_CASE("merge rejects mismatched task vector shapes") {
    nn::ParamVector pre = flat({1.0, 2.0});
    std::vector<TaskVector> taus = {tau_of({1.0, 2.0, 3.0})};
    CHECK_THROWS_AS(merge_task_arithmetic(pre, taus, 0.5), std::invalid_argument);
}

TEST_CASE("cosine diagnostics report each task against the summed vector") {
    std::vector<TaskVector> taus = {tau_of({1.0, 0.0}), tau_of({0.0, 10.0})};
    std::vector<double> diag = cosine_diagnostics(taus);
    REQUIRE(diag.size() == 2);
    CHECK(diag[0] == doctest::Approx(1.0 / std::sqrt(101.0)).epsilon(1e-14));
    CHECK(diag[1] == doctest::Approx(10.0 / std::sqrt(101.0)).epsilon(1e-14));
}

TEST_CASE("lambda tuning picks the grid argmax") {
    auto merge_at = [](double lambda) { return flat({lambda}); };
    auto score = [](const nn::ParamVector& p) {
        double l = p.values[0];
        return -(l - 0.35) * (l - 0.35);
    };
    LambdaSearchResult r =
        tune_lambda(merge_at, MergeConfig::default_lambda_grid(), score);
    CHECK(r.lambda_star == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(r.scores.size() == MergeConfig::default_lambda_grid().size());
}

TEST_CASE("lambda tuning breaks ties toward the smaller lambda") {
    auto merge_at = [](double lambda) { return flat({lambda}); };
    auto constant = [](const nn::ParamVector&) { return 0.5; };
    LambdaSearchResult r =
        tune_lambda(merge_at, MergeConfig::default_lambda_grid(), constant);
    CHECK(r.lambda_star == 0.0);

    LambdaSearchResult single = tune_lambda(merge_at, {0.0}, constant);
    CHECK(single.lambda_star == 0.0);
    CHECK(single.scores.size() == 1);
}

TEST_CASE("lambda tuning on a trained task tracks validation accuracy") {
    harness::DatasetSpec dspec;
    dspec.input_dim = 8;
    dspec.classes_per_task = 2;
    dspec.train_count = 128;
    dspec.val_count = 48;
    dspec.test_count = 48;
    dspec.seed = 0;
    harness::TaskSuite suite = harness::gen_synthetic_tasks(dspec, 1);
    nn::ModelSpec model;
    model.input_dim = 8;
    model.hidden_dims = {16};
    model.num_classes = 2;
    nn::ParamVector pre = nn::he_uniform_init(model, 0);
    train::TrainConfig cfg = train::TrainConfig::desk_defaults();
    cfg.steps = 200;
    cfg.warmup_steps = 20;
    nn::ParamVector theta = train::finetune(model, pre, suite.tasks[0].train, cfg).theta;
    std::vector<TaskVector> taus = {compute_task_vector(theta, pre, "t0")};

    auto merge_at = [&](double l) { return merge_task_arithmetic(pre, taus, l); };
    auto score = [&](const nn::ParamVector& p) {
        return metrics::accuracy(model, p, suite.tasks[0].val);
    };
    LambdaSearchResult r = tune_lambda(merge_at, MergeConfig::default_lambda_grid(), score);

    double best = -1.0;
    for (const auto& [l, s] : r.scores) best = std::max(best, s);
    double at_star = score(merge_at(r.lambda_star));
    CHECK(at_star == doctest::Approx(best));
    CHECK(at_star >= 0.95);
    // Tie-break: no smaller grid lambda attains the same score.
    for (const auto& [l, s] : r.scores)
        if (l < r.lambda_star) CHECK(s < best);
}
