#pragma once

#include <string>
#include <vector>

#include "tvc/nn.hpp"

namespace tvc::metrics {

// Fraction of samples whose argmax logit matches the label; argmax ties
// resolve to the lowest class index.
double accuracy(const nn::ModelSpec& spec, const nn::ParamVector& theta, const nn::Dataset& data);

int argmax_lowest(std::span<const double> v);

// Per-task ratio merged / individual. Zero individual accuracy is a
// std::invalid_argument (the ratio is meaningless there).
double normalized_accuracy(double merged_acc, double individual_acc);

// Mean Shannon entropy of softmax(logits) at T=1 over the dataset, in nats.
double predictive_entropy(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                          const nn::Dataset& data);

// ===== Reliability / ECE =====

struct ReliabilityBin {
    double lo = 0.0;
    double hi = 0.0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct ReliabilityReport {
    std::vector<ReliabilityBin> bins;  // empty bins excluded
    double ece = 0.0;
    std::size_t total = 0;
};

// Equal-width bins over max-softmax confidence in [0, 1]; confidence exactly
// 1.0 lands in the last bin. ECE is the count-weighted mean |acc - conf|.
ReliabilityReport reliability_from_scores(std::span<const double> confidences,
                                          std::span<const std::uint8_t> correct,
                                          std::size_t num_bins = 10);

ReliabilityReport reliability(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                              const nn::Dataset& data, std::size_t num_bins = 10);

// ===== Temperature scaling =====

inline constexpr double kTempLo = 0.05;
inline constexpr double kTempHi = 20.0;
inline constexpr double kTempTol = 1e-4;

// Mean negative log likelihood of softmax(logits / T) against the labels.
double mean_nll_logits(const std::vector<std::vector<double>>& logits,
                       std::span<const int> labels, double temperature);

// Golden-section NLL minimization over T in [kTempLo, kTempHi] to kTempTol.
// Degenerate input where every label is identical warns on stderr and
// returns 1.0.
double fit_temperature_logits(const std::vector<std::vector<double>>& logits,
                              std::span<const int> labels);

double temperature_scale_fit(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                             const nn::Dataset& val);

double mean_nll(const nn::ModelSpec& spec, const nn::ParamVector& theta, const nn::Dataset& data,
                double temperature);

// ===== Interpolation sweep =====

// Accuracy of theta_pre + kappa * tau over the kappa grid.
std::vector<std::pair<double, double>> scaling_sweep(const nn::ModelSpec& spec,
                                                     const nn::ParamVector& theta_pre,
                                                     const nn::ParamVector& tau,
                                                     const nn::Dataset& data,
                                                     std::span<const double> kappa_grid);

// Default grid 0.0, 0.1, ..., 3.0.
std::vector<double> default_kappa_grid();

// ===== Aggregation =====

struct TaskEval {
    std::string task_id;
    double accuracy = 0.0;
    double normalized_accuracy = 0.0;
    double entropy = 0.0;
};

struct EvalResult {
    std::vector<TaskEval> per_task;
    double mean_accuracy = 0.0;
    double mean_normalized = 0.0;  // mean of per-task ratios
    double mean_entropy = 0.0;
};

EvalResult aggregate(std::vector<TaskEval> per_task);

}  // namespace tvc::metrics
