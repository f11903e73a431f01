#include <stdexcept>
#include <cmath>
#include <random>

#include "doctest.h"
#include "tvc/nn.hpp"

using namespace tvc;
using namespace tvc::nn;

namespace {

ParamVector random_params(const ModelSpec& spec, std::uint64_t seed, double scl = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scl);
    ParamVector p = zeros_like(spec);
    for (double& v : p.values) v = dist(rng);
    return p;
}

Batch random_batch(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, static_cast<int>(spec.num_classes) - 1);
    Batch b;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(spec.input_dim);
        for (double& v : x) v = dist(rng);
        b.inputs.push_back(std::move(x));
        b.labels.push_back(lab(rng));
    }
    return b;
}

// Central finite differences of the mean batch loss over every parameter.
double max_grad_error(const ModelSpec& spec, const ParamVector& theta, const Batch& batch,
                      const LossSpec& loss) {
    ParamVector grad = grad_loss(spec, theta, batch, loss);
    const double h = 1e-5;
    double worst = 0.0;
    double scale = 0.0;
    for (double g : grad.values) scale = std::max(scale, std::abs(g));
    ParamVector probe = theta;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double keep = probe.values[i];
        probe.values[i] = keep + h;
        double up = eval_batch(spec, probe, batch, loss).loss;
        probe.values[i] = keep - h;
        double down = eval_batch(spec, probe, batch, loss).loss;
        probe.values[i] = keep;
        double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grad.values[i]));
    }
    return worst / (scale + 1e-8);
}

}  // namespace

TEST_CASE("forward with all-zero parameters gives zero logits") {
    ModelSpec spec;
    ParamVector theta = zeros_like(spec);
    std::vector<double> x(spec.input_dim, 1.7);
    std::vector<double> z = forward_logits(spec, theta, x);
    REQUIRE(z.size() == spec.num_classes);
    for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("single linear layer maps a basis vector to weight column plus bias") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {};
    spec.num_classes = 3;
    ParamVector theta = zeros_like(spec);
    // Weight block is row-major (out x in), bias follows.
    linalg::DenseMatrix w(3, 3);
    double k = 1.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) w.at(i, j) = k++;
    set_layer_matrix(theta, 0, w);
    linalg::DenseMatrix b(3, 1);
    b.at(0, 0) = 0.5;
    b.at(1, 0) = -0.5;
    b.at(2, 0) = 2.0;
    set_layer_matrix(theta, 1, b);

    const std::vector<double> x_probe = {1.0, 0.0, 0.0};
    std::vector<double> z = forward_logits(spec, theta, x_probe);
    CHECK(z[0] == doctest::Approx(w.at(0, 0) + 0.5).epsilon(1e-15));
    CHECK(z[1] == doctest::Approx(w.at(1, 0) - 0.5).epsilon(1e-15));
    CHECK(z[2] == doctest::Approx(w.at(2, 0) + 2.0).epsilon(1e-15));
}

TEST_CASE("forward matches an independent layer-by-layer evaluation") {
    ModelSpec spec;
    spec.input_dim = 5;
    spec.hidden_dims = {7, 6};
    spec.num_classes = 4;
    spec.activation = Activation::tanh;
    ParamVector theta = random_params(spec, 33);
    std::mt19937_64 rng(44);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> x(spec.input_dim);
    for (double& v : x) v = dist(rng);

    // Re-evaluate with explicit matrix extraction, no shared code path.
    std::vector<double> act = x;
    for (std::size_t layer = 0; layer < 3; ++layer) {
        linalg::DenseMatrix w = layer_matrix(theta, 2 * layer);
        linalg::DenseMatrix b = layer_matrix(theta, 2 * layer + 1);
        std::vector<double> next(w.rows);
        for (std::size_t o = 0; o < w.rows; ++o) {
            double s = b.at(o, 0);
            for (std::size_t i = 0; i < w.cols; ++i) s += w.at(o, i) * act[i];
            next[o] = s;
        }
        if (layer < 2)
            for (double& v : next) v = std::tanh(v);
        act = std::move(next);
    }

    std::vector<double> z = forward_logits(spec, theta, x);
    REQUIRE(z.size() == act.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        CHECK(z[i] == doctest::Approx(act[i]).epsilon(1e-12));
}

TEST_CASE("forward rejects shape mismatches") {
    ModelSpec spec;
    ParamVector theta = zeros_like(spec);
    std::vector<double> short_x(spec.input_dim - 1, 0.0);
    CHECK_THROWS_AS(forward_logits(spec, theta, short_x), std::invalid_argument);
}

TEST_CASE("gradient vanishes at a symmetric stationary point") {
    // One hidden unit, zero parameters, balanced two-class batch: every
    // backpropagated term cancels, so the analytic gradient must be ~0.
    ModelSpec spec;
    spec.input_dim = 2;
    spec.hidden_dims = {1};
    spec.num_classes = 2;
    ParamVector theta = zeros_like(spec);
    Batch b;
    b.inputs = {{1.0, 0.0}, {0.0, 1.0}};
    b.labels = {0, 1};
    LossSpec loss;
    ParamVector g = grad_loss(spec, theta, b, loss);
    CHECK(l2_norm(g) < 1e-8);
}

TEST_CASE("analytic gradients match finite differences for every loss kind") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {5};
    spec.num_classes = 3;

    LossSpec ce;
    LossSpec ls;
    ls.kind = LossSpec::Kind::label_smoothing;
    ls.alpha = 0.1;
    LossSpec focal;
    focal.kind = LossSpec::Kind::focal;
    focal.gamma = 10.0;
    LossSpec kd;
    kd.kind = LossSpec::Kind::kd_soft;
    kd.t_tcr = 2.0;
    kd.t_stu = 5.0;
    LossSpec mix;
    mix.kind = LossSpec::Kind::mixup;

    std::uint64_t seed = 500;
    for (const LossSpec& loss : {ce, ls, focal, kd, mix}) {
        Batch b = random_batch(spec, 4, seed);
        if (loss.kind == LossSpec::Kind::kd_soft) {
            std::mt19937_64 rng(seed + 1);
            std::normal_distribution<double> dist(0.0, 2.0);
            for (std::size_t i = 0; i < b.size(); ++i) {
                std::vector<double> t(spec.num_classes);
                for (double& v : t) v = dist(rng);
                b.teacher_logits.push_back(std::move(t));
            }
        }
        if (loss.kind == LossSpec::Kind::mixup) {
            for (std::size_t i = 0; i < b.size(); ++i) {
                std::vector<double> t(spec.num_classes, 0.0);
                t[b.labels[i]] = 0.4;
                t[(b.labels[i] + 1) % spec.num_classes] = 0.6;
                b.soft_targets.push_back(std::move(t));
            }
        }
        ParamVector theta = random_params(spec, seed + 2);
        CAPTURE(static_cast<int>(loss.kind));
        CHECK(max_grad_error(spec, theta, b, loss) < 1e-4);
        seed += 10;
    }
}

TEST_CASE("KD gradient is zero when the student already matches the teacher") {
    ModelSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {4};
    spec.num_classes = 3;
    ParamVector theta = random_params(spec, 99);
    Batch b = random_batch(spec, 3, 100);
    LossSpec kd;
    kd.kind = LossSpec::Kind::kd_soft;
    kd.t_tcr = 4.0;
    kd.t_stu = 4.0;
    for (const auto& x : b.inputs) b.teacher_logits.push_back(forward_logits(spec, theta, x));
    ParamVector g = grad_loss(spec, theta, b, kd);
    CHECK(l2_norm(g) < 1e-10);
}

TEST_CASE("grad_loss rejects an empty batch") {
    ModelSpec spec;
    ParamVector theta = zeros_like(spec);
    Batch empty;
    CHECK_THROWS_AS(grad_loss(spec, theta, empty, LossSpec{}), std::invalid_argument);
}

TEST_CASE("freeze_head zeroes exactly the final layer gradient") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {5};
    spec.num_classes = 3;
    ParamVector theta = random_params(spec, 7);
    Batch b = random_batch(spec, 4, 8);
    BatchEval frozen = eval_batch(spec, theta, b, LossSpec{}, true);
    BatchEval open = eval_batch(spec, theta, b, LossSpec{}, false);
    std::size_t head_w = 2;  // entries: W0 b0 W1 b1
    std::size_t head_b = 3;
    std::size_t off_w = frozen.grad.offset_of(head_w);
    std::size_t off_b = frozen.grad.offset_of(head_b);
    for (std::size_t i = off_w; i < off_w + frozen.grad.shape_map[head_w].size(); ++i)
        CHECK(frozen.grad.values[i] == 0.0);
    for (std::size_t i = off_b; i < off_b + frozen.grad.shape_map[head_b].size(); ++i)
        CHECK(frozen.grad.values[i] == 0.0);
    // Earlier layers still receive gradient.
    double pre_norm = 0.0;
    for (std::size_t i = 0; i < off_w; ++i)
        pre_norm += frozen.grad.values[i] * frozen.grad.values[i];
    CHECK(pre_norm > 0.0);
    CHECK(open.loss == frozen.loss);
}

TEST_CASE("shape map partitions the flat vector exactly") {
    ModelSpec spec;
    spec.input_dim = 16;
    spec.hidden_dims = {32, 32};
    spec.num_classes = 4;
    ParamVector p = zeros_like(spec);
    std::size_t total = 0;
    for (std::size_t e = 0; e < p.shape_map.size(); ++e) {
        CHECK(p.offset_of(e) == total);
        total += p.shape_map[e].size();
    }
    CHECK(total == p.dim());
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("layer matrix extraction roundtrips bit-identically") {
    ModelSpec spec;
    spec.input_dim = 6;
    spec.hidden_dims = {5};
    spec.num_classes = 3;
    ParamVector p = random_params(spec, 1234);
    ParamVector q = zeros_like(spec);
    for (std::size_t e = 0; e < p.shape_map.size(); ++e)
        set_layer_matrix(q, e, layer_matrix(p, e));
    CHECK(p.values == q.values);

    ParamVector zero = zeros_like(spec);
    for (std::size_t e = 0; e < zero.shape_map.size(); ++e) {
        linalg::DenseMatrix m = layer_matrix(zero, e);
        for (double v : m.data) CHECK(v == 0.0);
    }
}

TEST_CASE("perturbing one flat element changes exactly one structured element") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {3};
    spec.num_classes = 2;
    ParamVector p = random_params(spec, 55);
    ParamVector q = p;
    std::size_t target = 7;
    q.values[target] += 1.0;
    std::size_t changed = 0;
    for (std::size_t e = 0; e < p.shape_map.size(); ++e) {
        linalg::DenseMatrix a = layer_matrix(p, e);
        linalg::DenseMatrix b = layer_matrix(q, e);
        for (std::size_t i = 0; i < a.data.size(); ++i)
            if (a.data[i] != b.data[i]) ++changed;
    }
    CHECK(changed == 1);
}

TEST_CASE("logit map is continuous in the parameters") {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {6};
    spec.num_classes = 3;
    ParamVector theta = random_params(spec, 3);
    ParamVector dir = random_params(spec, 4, 1.0);
    std::vector<double> x = {0.3, -1.2, 0.8, 0.1};
    std::vector<double> base = forward_logits(spec, theta, x);
    double prev = 1e30;
    for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
        std::vector<double> z = forward_logits(spec, axpy(theta, h, dir), x);
        double diff = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) diff = std::max(diff, std::abs(z[i] - base[i]));
        CHECK(diff < prev);
        prev = diff;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("he initialization is seeded, bounded, and zero-bias") {
    ModelSpec spec;
    ParamVector a = he_uniform_init(spec, 9);
    ParamVector b = he_uniform_init(spec, 9);
    ParamVector c = he_uniform_init(spec, 10);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    for (std::size_t e = 0; e < a.shape_map.size(); ++e) {
        const ShapeEntry& se = a.shape_map[e];
        std::size_t off = a.offset_of(e);
        if (se.kind == ParamKind::bias) {
            for (std::size_t i = 0; i < se.size(); ++i) CHECK(a.values[off + i] == 0.0);
        } else {
            double limit = std::sqrt(6.0 / static_cast<double>(se.cols));
            for (std::size_t i = 0; i < se.size(); ++i)
                CHECK(std::abs(a.values[off + i]) <= limit);
        }
    }
}

TEST_CASE("parameter arithmetic enforces matching shape maps") {
    ModelSpec small;
    small.input_dim = 2;
    small.hidden_dims = {2};
    small.num_classes = 2;
    ModelSpec other;
    other.input_dim = 3;
    other.hidden_dims = {2};
    other.num_classes = 2;
    ParamVector a = zeros_like(small);
    ParamVector b = zeros_like(other);
    CHECK_THROWS_AS(a += b, std::invalid_argument);
    CHECK_THROWS_AS(axpy(a, 1.0, b), std::invalid_argument);
}
