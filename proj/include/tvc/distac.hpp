#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvc/merge.hpp"
#include "tvc/nn.hpp"

namespace tvc::distac {

// The conditioning loss is pure distillation; the hard-label term is off by
// construction (its weight is fixed at 1).
inline constexpr double kDistillWeight = 1.0;

// Inputs only. Conditioning never sees labels; this type cannot carry them.
struct UnlabeledSet {
    std::vector<std::vector<double>> inputs;

    std::size_t size() const { return inputs.size(); }
};

struct KDConfig {
    double kappa = 1.0;     // student anchor theta_pre + kappa * tau
    double t_tcr = 10.0;    // teacher softmax temperature
    double t_stu = 10.0;    // student softmax temperature
    double beta = 0.5;      // weight of ||theta - theta_0||^2
    std::size_t steps = 500;
    double eta = 1e-3;      // plain gradient-descent step size (desk scale)
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    bool use_adamw = false;  // parity switch; plain GD is the reference path

    void validate() const;

    // Temperature pairs for the two failure modes. Norm mismatch distills
    // softly on both sides; low confidence pairs a sharp teacher with a
    // smooth student so the student's logits come out rescaled.
    static KDConfig norm_mismatch_profile();
    static KDConfig low_confidence_profile();
};

// Rescale target for a set of task-vector norms: the largest-norm entry
// (lowest index on ties) gets kappa = mean of the other norms / its norm.
// With a single norm the choice is (0, 1.0).
struct KappaChoice {
    std::size_t index = 0;
    double kappa = 1.0;
};

KappaChoice choose_kappa_norm_match(std::span<const double> norms);

// t_tcr * t_stu * KL(softmax(z_tcr / t_tcr) || softmax(z_stu / t_stu)).
double kd_soft_loss(std::span<const double> z_tcr, std::span<const double> z_stu, double t_tcr,
                    double t_stu);

struct DistacStep {
    std::size_t step = 0;     // 1-based
    double rel_accuracy = 0;  // student acc / teacher acc on the probe; NaN without a probe
    double rel_norm = 0.0;    // ||theta - theta_pre|| / (kappa * ||tau||)
    double entropy = 0.0;     // student mean predictive entropy at T=1
    double loss = 0.0;        // KD objective incl. the anchor penalty
};

struct DistacResult {
    nn::ParamVector theta;
    std::vector<DistacStep> history;
    bool aborted = false;       // non-finite loss: theta is the last finite iterate
    std::string abort_reason;
};

// Conditions one task vector: the teacher predicts with theta_pre + tau, the
// student starts at theta_0 = theta_pre + kappa * tau and takes cfg.steps
// plain gradient steps on mean kd_soft_loss over a minibatch plus
// beta * ||theta - theta_0||^2. Minibatches are drawn from `unlabeled` with
// the config seed. `probe`, when given, is used only for history logging
// (relative accuracy and entropy); it never feeds the optimization.
DistacResult distac_condition(const nn::ModelSpec& spec, const nn::ParamVector& theta_pre,
                              const merge::TaskVector& tau, const UnlabeledSet& unlabeled,
                              const KDConfig& cfg, const nn::Dataset* probe = nullptr);

}  // namespace tvc::distac
