#include "tvc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tvc::train {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

TrainConfig TrainConfig::desk_defaults() {
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.steps = 500;
    cfg.warmup_steps = 50;
    cfg.batch_size = 64;
    return cfg;
}

void TrainConfig::validate() const {
    require(lr > 0.0, "TrainConfig: lr must be > 0");
    require(warmup_steps <= steps, "TrainConfig: warmup_steps must not exceed steps");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(weight_decay >= 0.0, "TrainConfig: weight_decay must be >= 0");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "TrainConfig: betas must be in [0, 1)");
}

std::string TrainConfig::summary() const {
    std::ostringstream os;
    os << "loss=" << nn::to_string(loss.kind) << ";lr=" << lr << ";steps=" << steps
       << ";warmup=" << warmup_steps << ";sched=" << (schedule == Schedule::cosine ? "cosine" : "constant")
       << ";wd=" << weight_decay << ";batch=" << batch_size << ";seed=" << seed;
    if (loss.kind == nn::LossSpec::Kind::label_smoothing) os << ";alpha=" << loss.alpha;
    if (loss.kind == nn::LossSpec::Kind::focal) os << ";gamma=" << loss.gamma;
    return os.str();
}

double lr_multiplier(const TrainConfig& cfg, std::size_t step) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    if (cfg.schedule == Schedule::constant) return 1.0;
    const std::size_t total = std::max<std::size_t>(cfg.steps, cfg.warmup_steps + 1);
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(total - cfg.warmup_steps);
    return 0.5 * (1.0 + std::cos(kPi * std::min(progress, 1.0)));
}

namespace {

// Decoupled-weight-decay Adam step with bias correction.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;

    explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad, const TrainConfig& cfg) {
        ++t;
        const double lr_t = cfg.lr * lr_multiplier(cfg, t - 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr_t * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * theta[i]);
        }
    }
};

// Sequential batches over a per-epoch reshuffled index order. The partial
// batch at an epoch boundary is used as-is.
class BatchStream {
  public:
    BatchStream(std::size_t n, std::size_t batch_size, std::mt19937_64& rng)
        : n_(n), batch_(batch_size), rng_(rng), order_(n) {
        std::iota(order_.begin(), order_.end(), 0);
        reshuffle();
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> idx;
        idx.reserve(std::min(batch_, n_));
        for (std::size_t k = 0; k < batch_ && pos_ < n_; ++k) idx.push_back(order_[pos_++]);
        if (pos_ >= n_) {
            reshuffle();
        }
        return idx;
    }

  private:
    void reshuffle() {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
    }

    std::size_t n_;
    std::size_t batch_;
    std::mt19937_64& rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

nn::Batch gather_batch(const nn::Dataset& data, const std::vector<std::size_t>& idx,
                       const nn::LossSpec& loss, std::size_t num_classes, std::mt19937_64& rng) {
    nn::Batch b;
    b.inputs.reserve(idx.size());
    if (loss.kind == nn::LossSpec::Kind::mixup) {
        // One blend coefficient per optimization step; partners are a seeded
        // permutation of the batch itself.
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double lam = unit(rng);
        std::vector<std::size_t> partner(idx.begin(), idx.end());
        std::shuffle(partner.begin(), partner.end(), rng);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto mixed = mixup_pair(data.inputs[idx[k]], data.labels[idx[k]],
                                    data.inputs[partner[k]], data.labels[partner[k]], lam, num_classes);
            b.inputs.push_back(std::move(mixed.x));
            b.soft_targets.push_back(std::move(mixed.soft_target));
        }
    } else {
        for (std::size_t i : idx) {
            b.inputs.push_back(data.inputs[i]);
            b.labels.push_back(data.labels[i]);
        }
    }
    return b;
}

}  // namespace

FinetuneResult finetune(const nn::ModelSpec& spec, const nn::ParamVector& theta_init,
                        const nn::Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    data.validate(spec.input_dim, spec.num_classes);
    require(data.size() > 0, "finetune: empty dataset");
    require(cfg.loss.kind != nn::LossSpec::Kind::kd_soft,
            "finetune: kd_soft is driven by the distillation loop, not the trainer");

    FinetuneResult res;
    res.theta = theta_init;
    res.history.reserve(cfg.steps);

    std::mt19937_64 rng(cfg.seed);
    BatchStream stream(data.size(), cfg.batch_size, rng);
    AdamState adam(res.theta.values.size());

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const auto idx = stream.next();
        const nn::Batch batch = gather_batch(data, idx, cfg.loss, spec.num_classes, rng);
        const nn::BatchEval ev = nn::eval_batch(spec, res.theta, batch, cfg.loss, cfg.freeze_head);
        if (!std::isfinite(ev.loss))
            throw std::runtime_error("finetune: non-finite loss at step " + std::to_string(step + 1) +
                                     " (" + cfg.summary() + ")");
        adam.step(res.theta.values, ev.grad.values, cfg);
        res.history.push_back({step + 1, ev.loss, ev.mean_entropy});
    }
    return res;
}

FinetuneResult train_mtl(const nn::ModelSpec& spec, const nn::ParamVector& theta_init,
                         const std::vector<nn::Dataset>& tasks, const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    require(!tasks.empty(), "train_mtl: no tasks");
    for (const auto& t : tasks) {
        t.validate(spec.input_dim, spec.num_classes);
        require(t.size() > 0, "train_mtl: empty task dataset");
    }
    require(cfg.loss.kind != nn::LossSpec::Kind::kd_soft,
            "train_mtl: kd_soft is driven by the distillation loop, not the trainer");

    FinetuneResult res;
    res.theta = theta_init;
    res.history.reserve(cfg.steps);

    // Task 0 reuses the run seed so the single-task case reduces to finetune.
    std::vector<std::mt19937_64> rngs;
    std::vector<BatchStream> streams;
    rngs.reserve(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) rngs.emplace_back(cfg.seed + t);
    streams.reserve(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t)
        streams.emplace_back(tasks[t].size(), cfg.batch_size, rngs[t]);

    AdamState adam(res.theta.values.size());
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::size_t t = step % tasks.size();
        const auto idx = streams[t].next();
        const nn::Batch batch = gather_batch(tasks[t], idx, cfg.loss, spec.num_classes, rngs[t]);
        const nn::BatchEval ev = nn::eval_batch(spec, res.theta, batch, cfg.loss, cfg.freeze_head);
        if (!std::isfinite(ev.loss))
            throw std::runtime_error("train_mtl: non-finite loss at step " + std::to_string(step + 1));
        adam.step(res.theta.values, ev.grad.values, cfg);
        res.history.push_back({step + 1, ev.loss, ev.mean_entropy});
    }
    return res;
}

// ===== Scalar loss helpers =====

double ce_loss(std::span<const double> logits, int target, double alpha) {
    nn::LossSpec spec;
    spec.kind = alpha == 0.0 ? nn::LossSpec::Kind::cross_entropy : nn::LossSpec::Kind::label_smoothing;
    spec.alpha = alpha;
    return nn::loss_on_logits(logits, spec, target).loss;
}

double focal_loss(std::span<const double> logits, int target, double gamma) {
    nn::LossSpec spec;
    spec.kind = nn::LossSpec::Kind::focal;
    spec.gamma = gamma;
    return nn::loss_on_logits(logits, spec, target).loss;
}

MixupSample mixup_pair(std::span<const double> x1, int y1, std::span<const double> x2, int y2,
                       double lam, std::size_t num_classes) {
    require(x1.size() == x2.size(), "mixup_pair: input dimension mismatch");
    require(lam >= 0.0 && lam <= 1.0, "mixup_pair: lam must be in [0, 1]");
    require(y1 >= 0 && static_cast<std::size_t>(y1) < num_classes, "mixup_pair: y1 out of range");
    require(y2 >= 0 && static_cast<std::size_t>(y2) < num_classes, "mixup_pair: y2 out of range");
    MixupSample out;
    out.x.resize(x1.size());
    for (std::size_t i = 0; i < x1.size(); ++i) out.x[i] = lam * x1[i] + (1.0 - lam) * x2[i];
    out.soft_target.assign(num_classes, 0.0);
    out.soft_target[static_cast<std::size_t>(y1)] += lam;
    out.soft_target[static_cast<std::size_t>(y2)] += 1.0 - lam;
    return out;
}

}  // namespace tvc::train
