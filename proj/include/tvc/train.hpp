#pragma once

#include <cstdint>
#include <vector>

#include "tvc/nn.hpp"

namespace tvc::train {

enum class Schedule : std::uint8_t { constant = 0, cosine = 1 };

// Optimization settings. Default-constructed values are the full-scale
// profile; desk_defaults() is the scaled-down profile used by the scenario
// harness (and by most tests).
struct TrainConfig {
    double lr = 1e-5;
    std::size_t steps = 2000;
    std::size_t warmup_steps = 200;
    Schedule schedule = Schedule::cosine;
    double weight_decay = 0.1;
    std::size_t batch_size = 128;
    nn::LossSpec loss;
    std::uint64_t seed = 0;
    bool freeze_head = false;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    static TrainConfig desk_defaults();
    void validate() const;  // throws std::invalid_argument
    std::string summary() const;
};

// Learning-rate multiplier at `step` (0-based): linear warmup to 1 over
// warmup_steps, then either flat or a cosine decay to 0 at `steps`.
// Nonincreasing after warmup.
double lr_multiplier(const TrainConfig& cfg, std::size_t step);

struct StepRecord {
    std::size_t step = 0;      // 1-based
    double loss = 0.0;         // batch mean loss
    double train_entropy = 0.0;  // batch mean predictive entropy at T=1
};

struct FinetuneResult {
    nn::ParamVector theta;
    std::vector<StepRecord> history;
};

// AdamW fine-tuning from theta_init. Data order is reshuffled once per epoch
// with the run seed; identical seeds give bit-identical results. Throws
// std::runtime_error if the loss goes non-finite.
FinetuneResult finetune(const nn::ModelSpec& spec, const nn::ParamVector& theta_init,
                        const nn::Dataset& data, const TrainConfig& cfg);

// Joint training over several task datasets, one batch per task per round
// (round-robin). With a single task this is exactly finetune() under the
// same seed.
FinetuneResult train_mtl(const nn::ModelSpec& spec, const nn::ParamVector& theta_init,
                         const std::vector<nn::Dataset>& tasks, const TrainConfig& cfg);

// ===== Scalar loss helpers =====

// Cross-entropy with label smoothing alpha (0 = plain CE), in nats.
double ce_loss(std::span<const double> logits, int target, double alpha = 0.0);

// Focal loss -(1 - p_t)^gamma * log(p_t), in nats.
double focal_loss(std::span<const double> logits, int target, double gamma);

struct MixupSample {
    std::vector<double> x;
    std::vector<double> soft_target;
};

// Convex blend of two labeled samples; soft target mixes the one-hot labels
// with the same coefficient. lam must lie in [0, 1].
MixupSample mixup_pair(std::span<const double> x1, int y1, std::span<const double> x2, int y2,
                       double lam, std::size_t num_classes);

}  // namespace tvc::train
