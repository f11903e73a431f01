#include "tvc/distac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tvc/metrics.hpp"

namespace tvc::distac {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void KDConfig::validate() const {
    require(std::isfinite(kappa), "KDConfig: kappa must be finite");
    require(t_tcr > 0.0 && t_stu > 0.0, "KDConfig: temperatures must be > 0");
    require(beta >= 0.0, "KDConfig: beta must be >= 0");
    require(eta > 0.0, "KDConfig: eta must be > 0");
    require(batch_size >= 1, "KDConfig: batch_size must be >= 1");
}

KDConfig KDConfig::norm_mismatch_profile() {
    KDConfig cfg;
    cfg.t_tcr = 10.0;
    cfg.t_stu = 10.0;
    return cfg;
}

KDConfig KDConfig::low_confidence_profile() {
    KDConfig cfg;
    cfg.t_tcr = 1.0;
    cfg.t_stu = 10.0;
    cfg.kappa = 1.0;
    return cfg;
}

KappaChoice choose_kappa_norm_match(std::span<const double> norms) {
    require(!norms.empty(), "choose_kappa_norm_match: no norms");
    for (double n : norms)
        require(std::isfinite(n) && n >= 0.0, "choose_kappa_norm_match: norms must be finite and >= 0");
    KappaChoice out;
    for (std::size_t i = 1; i < norms.size(); ++i)
        if (norms[i] > norms[out.index]) out.index = i;  // strict: ties keep the lowest index
    if (norms.size() == 1) {
        out.kappa = 1.0;
        return out;
    }
    require(norms[out.index] > 0.0, "choose_kappa_norm_match: all norms are zero");
    double mean_rest = 0.0;
    for (std::size_t i = 0; i < norms.size(); ++i)
        if (i != out.index) mean_rest += norms[i];
    mean_rest /= static_cast<double>(norms.size() - 1);
    require(mean_rest > 0.0,
            "choose_kappa_norm_match: every other norm is zero, no target to match");
    out.kappa = mean_rest / norms[out.index];
    return out;
}

double kd_soft_loss(std::span<const double> z_tcr, std::span<const double> z_stu, double t_tcr,
                    double t_stu) {
    nn::LossSpec spec;
    spec.kind = nn::LossSpec::Kind::kd_soft;
    spec.t_tcr = t_tcr;
    spec.t_stu = t_stu;
    return nn::loss_on_logits(z_stu, spec, -1, {}, z_tcr).loss;
}

namespace {

double mean_entropy_on(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                       const std::vector<std::vector<double>>& inputs, std::size_t limit) {
    const std::size_t n = std::min(inputs.size(), limit);
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto logits = nn::forward_logits(spec, theta, inputs[i]);
        h += linalg::entropy(linalg::softmax_temp(logits, 1.0));
    }
    return h / static_cast<double>(n);
}

}  // namespace

DistacResult distac_condition(const nn::ModelSpec& spec, const nn::ParamVector& theta_pre,
                              const merge::TaskVector& tau, const UnlabeledSet& unlabeled,
                              const KDConfig& cfg, const nn::Dataset* probe) {
    cfg.validate();
    spec.validate();
    require(unlabeled.size() > 0, "distac_condition: empty unlabeled set");
    for (const auto& x : unlabeled.inputs)
        require(x.size() == spec.input_dim, "distac_condition: input dimension mismatch");

    const nn::ParamVector theta_teacher = theta_pre + tau.delta;  // unscaled teacher
    const nn::ParamVector theta_0 = nn::axpy(theta_pre, cfg.kappa, tau.delta);

    nn::LossSpec kd;
    kd.kind = nn::LossSpec::Kind::kd_soft;
    kd.t_tcr = cfg.t_tcr;
    kd.t_stu = cfg.t_stu;

    const double anchor_norm = cfg.kappa * nn::l2_norm(tau.delta);
    double teacher_acc = std::numeric_limits<double>::quiet_NaN();
    if (probe) teacher_acc = metrics::accuracy(spec, theta_teacher, *probe);

    DistacResult res;
    res.theta = theta_0;
    res.history.reserve(cfg.steps);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> all_idx(unlabeled.size());
    std::iota(all_idx.begin(), all_idx.end(), 0);
    const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, unlabeled.size());

    // Optional adaptive variant; the reference path is the bare gradient step.
    std::vector<double> adam_m, adam_v;
    if (cfg.use_adamw) {
        adam_m.assign(res.theta.values.size(), 0.0);
        adam_v.assign(res.theta.values.size(), 0.0);
    }

    nn::ParamVector last_good = res.theta;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> idx;
        idx.reserve(batch_n);
        std::sample(all_idx.begin(), all_idx.end(), std::back_inserter(idx), batch_n, rng);

        nn::Batch batch;
        batch.inputs.reserve(batch_n);
        batch.teacher_logits.reserve(batch_n);
        for (std::size_t i : idx) {
            batch.inputs.push_back(unlabeled.inputs[i]);
            batch.teacher_logits.push_back(nn::forward_logits(spec, theta_teacher, unlabeled.inputs[i]));
        }

        nn::BatchEval ev;
        try {
            ev = nn::eval_batch(spec, res.theta, batch, kd);
        } catch (const std::exception&) {
            res.theta = last_good;
            res.aborted = true;
            res.abort_reason = "non-finite forward pass at step " + std::to_string(step + 1);
            break;
        }
        double penalty = 0.0;
        for (std::size_t i = 0; i < res.theta.values.size(); ++i) {
            const double dz = res.theta.values[i] - theta_0.values[i];
            penalty += dz * dz;
            ev.grad.values[i] += 2.0 * cfg.beta * dz;
        }
        const double loss = ev.loss + cfg.beta * penalty;
        if (!std::isfinite(loss)) {
            res.theta = last_good;
            res.aborted = true;
            res.abort_reason = "non-finite loss at step " + std::to_string(step + 1);
            break;
        }
        last_good = res.theta;

        if (cfg.use_adamw) {
            const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double t = static_cast<double>(step + 1);
            for (std::size_t i = 0; i < res.theta.values.size(); ++i) {
                adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * ev.grad.values[i];
                adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * ev.grad.values[i] * ev.grad.values[i];
                const double mhat = adam_m[i] / (1.0 - std::pow(b1, t));
                const double vhat = adam_v[i] / (1.0 - std::pow(b2, t));
                res.theta.values[i] -= cfg.eta * mhat / (std::sqrt(vhat) + eps);
            }
        } else {
            for (std::size_t i = 0; i < res.theta.values.size(); ++i)
                res.theta.values[i] -= cfg.eta * ev.grad.values[i];
        }

        bool finite_iterate = true;
        for (double v : res.theta.values)
            if (!std::isfinite(v)) {
                finite_iterate = false;
                break;
            }
        if (!finite_iterate) {
            res.theta = last_good;
            res.aborted = true;
            res.abort_reason = "non-finite update at step " + std::to_string(step + 1);
            break;
        }

        DistacStep rec;
        rec.step = step + 1;
        rec.loss = loss;
        nn::ParamVector drift = res.theta;
        drift -= theta_pre;
        rec.rel_norm = anchor_norm > 0.0 ? nn::l2_norm(drift) / anchor_norm
                                         : std::numeric_limits<double>::quiet_NaN();
        try {
            if (probe) {
                const double stu_acc = metrics::accuracy(spec, res.theta, *probe);
                rec.rel_accuracy = teacher_acc > 0.0 ? stu_acc / teacher_acc
                                                     : std::numeric_limits<double>::quiet_NaN();
                rec.entropy = metrics::predictive_entropy(spec, res.theta, *probe);
            } else {
                rec.rel_accuracy = std::numeric_limits<double>::quiet_NaN();
                rec.entropy = mean_entropy_on(spec, res.theta, unlabeled.inputs, 128);
            }
        } catch (const std::exception&) {
            res.theta = last_good;
            res.aborted = true;
            res.abort_reason = "non-finite evaluation at step " + std::to_string(step + 1);
            break;
        }
        res.history.push_back(rec);
    }
    return res;
}

}  // namespace tvc::distac
