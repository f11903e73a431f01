#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tvc/nn.hpp"

namespace tvc::merge {

// theta_t - theta_pre for one task, with bookkeeping for reports.
struct TaskVector {
    nn::ParamVector delta;
    std::string task_id;
    std::string train_meta;
};

TaskVector compute_task_vector(const nn::ParamVector& theta_t, const nn::ParamVector& theta_pre,
                               std::string task_id, std::string train_meta = "");

enum class Method : std::uint8_t { uniform, task_arithmetic, ties, consensus, tsvm };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::vector<Method> all_methods();

enum class TsvmRankPolicy : std::uint8_t { full, per_task_topk };

struct MergeConfig {
    Method method = Method::task_arithmetic;
    double lambda = 0.3;
    std::vector<double> lambda_grid;        // default 0.0 .. 1.0 step 0.05
    double ties_keep_fraction = 0.2;
    std::size_t consensus_k = 2;
    double tall_weight = 1.0;               // lambda_w in the consensus masks
    TsvmRankPolicy tsvm_rank_policy = TsvmRankPolicy::per_task_topk;
    // Ranks kept per task and layer under per_task_topk; 0 picks
    // max(1, floor(min_dim / num_tasks)) so stacked factors stay independent.
    std::size_t tsvm_rank = 0;

    void validate() const;
    static std::vector<double> default_lambda_grid();
};

// Per-coordinate keep mask over a flat parameter vector.
struct MaskVector {
    std::vector<std::uint8_t> bits;

    std::size_t count() const;
    double density() const;
};

// ===== Merge strategies =====
// All of them return theta_pre + lambda-scaled combination; task vectors must
// share theta_pre's shape map (std::invalid_argument otherwise).

// Equal-weight averaging: theta_pre + (1/T) * sum_t tau_t.
nn::ParamVector merge_uniform(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus);

// theta_pre + lambda * sum_t tau_t.
nn::ParamVector merge_task_arithmetic(const nn::ParamVector& theta_pre,
                                      const std::vector<TaskVector>& taus, double lambda);

// Trim each tau to its top keep_fraction coordinates by magnitude, elect a
// per-coordinate sign by summed magnitude of the survivors, then average the
// sign-agreeing survivors. Coordinates with no survivor merge to zero.
nn::ParamVector merge_ties(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           double lambda, double keep_fraction);

// Consensus masking: tau_t[j] survives when at least k tasks consider j
// non-interfering (|tau_t[j]| >= lambda_w * |sum_s tau_s[j] - tau_t[j]|).
nn::ParamVector merge_consensus(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                                double lambda, double tall_weight, std::size_t k);

// Per matrix layer: SVD each task's delta, stack the task factors, whiten
// each stack M <- M (M^T M)^{-1/2}, and rebuild sum_t U_t S_t V_t^T from the
// whitened factors. Vector-shaped entries (biases) fall back to
// task-arithmetic summing. A rank-deficient whitening Gram matrix is lifted
// by 1e-10 I and reported through `warnings`.
nn::ParamVector merge_tsvm(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           double lambda, const MergeConfig& cfg,
                           std::vector<std::string>* warnings = nullptr);

// Dispatch on cfg.method with cfg's knobs and the given lambda.
nn::ParamVector merge_with(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           const MergeConfig& cfg, double lambda,
                           std::vector<std::string>* warnings = nullptr);

// ===== Mask diagnostics =====

// Per-task trim masks used by merge_ties.
std::vector<MaskVector> ties_masks(const std::vector<TaskVector>& taus, double keep_fraction);

struct ConsensusMasks {
    std::vector<MaskVector> tall;  // per task
    MaskVector consensus;          // shared across tasks
};

ConsensusMasks consensus_masks(const std::vector<TaskVector>& taus, double tall_weight,
                               std::size_t k);

// cos(sum_s tau_s, tau_t) per task; the norm-disparity fingerprint.
std::vector<double> cosine_diagnostics(const std::vector<TaskVector>& taus);

// ===== Lambda tuning =====

struct LambdaSearchResult {
    double lambda_star = 0.0;
    // (lambda, score) per grid point, in grid order.
    std::vector<std::pair<double, double>> scores;
};

// Evaluates score(merge_at(lambda)) over the grid and keeps the argmax,
// breaking ties toward the smaller lambda. The caller supplies the scorer
// (the harness wires mean validation accuracy) so merging stays decoupled
// from evaluation data handling.
LambdaSearchResult tune_lambda(const std::function<nn::ParamVector(double)>& merge_at,
                               const std::vector<double>& lambda_grid,
                               const std::function<double(const nn::ParamVector&)>& score);

}  // namespace tvc::merge
