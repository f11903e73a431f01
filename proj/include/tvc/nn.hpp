#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tvc/linalg.hpp"

namespace tvc::nn {

// ===== Model description =====

enum class Activation : std::uint8_t { relu = 0, tanh = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Fully connected classifier: input_dim -> hidden_dims... -> num_classes,
// with the chosen activation between layers and linear logits at the end.
// hidden_dims may be empty (single linear layer).
struct ModelSpec {
    std::size_t input_dim = 16;
    std::vector<std::size_t> hidden_dims = {32, 32};
    std::size_t num_classes = 4;
    Activation activation = Activation::relu;

    void validate() const;  // throws std::invalid_argument
    bool operator==(const ModelSpec&) const = default;
};

// ===== Parameters =====

enum class ParamKind : std::uint8_t { weight = 0, bias = 1 };

struct ShapeEntry {
    std::string name;
    ParamKind kind = ParamKind::weight;
    std::size_t rows = 0;  // bias: rows = length, cols = 1
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const ShapeEntry&) const = default;
};

std::vector<ShapeEntry> shape_map_for(const ModelSpec& spec);

// Flat parameter vector plus the shape map that partitions it. Weight blocks
// are row-major (out x in), laid out in shape-map order.
struct ParamVector {
    std::vector<double> values;
    std::vector<ShapeEntry> shape_map;

    std::size_t dim() const { return values.size(); }
    // Offset of entry i in `values`; the entries partition [0, dim()) exactly.
    std::size_t offset_of(std::size_t entry) const;
    void validate() const;  // shape map must partition values exactly

    ParamVector& operator+=(const ParamVector& o);
    ParamVector& operator-=(const ParamVector& o);
    ParamVector& operator*=(double c);
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(ParamVector a, double c);

// a + c*b, shape-checked.
ParamVector axpy(const ParamVector& a, double c, const ParamVector& b);

ParamVector zeros_like(const ModelSpec& spec);
// He-uniform weights (limit sqrt(6/fan_in)), zero biases, seeded.
ParamVector he_uniform_init(const ModelSpec& spec, std::uint64_t seed);

double l2_norm(const ParamVector& p);
// (name, Euclidean norm) per shape-map entry.
std::vector<std::pair<std::string, double>> per_layer_norms(const ParamVector& p);

// Extracts/overwrites one shape-map entry as a DenseMatrix (bias: n x 1).
linalg::DenseMatrix layer_matrix(const ParamVector& p, std::size_t entry);
void set_layer_matrix(ParamVector& p, std::size_t entry, const linalg::DenseMatrix& m);

// ===== Data =====

struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.size(); }
    void validate(std::size_t input_dim, std::size_t num_classes) const;
};

// ===== Losses =====

// Loss family used by both the trainer and the distillation loop.
//   cross_entropy    hard label
//   label_smoothing  hard label smoothed by alpha
//   mixup            soft target built by mixup_pair (plain soft-target CE)
//   focal            hard label, focusing exponent gamma
//   kd_soft          teacher logits; t_tcr * t_stu * KL(soft_tcr || soft_stu)
struct LossSpec {
    enum class Kind : std::uint8_t { cross_entropy, label_smoothing, mixup, focal, kd_soft };
    Kind kind = Kind::cross_entropy;
    double alpha = 0.1;
    double gamma = 10.0;
    double t_tcr = 1.0;
    double t_stu = 1.0;
};

std::string to_string(LossSpec::Kind k);
LossSpec::Kind loss_kind_from_string(const std::string& s);

// One training batch. `labels` drives cross_entropy/label_smoothing/focal,
// `soft_targets` drives mixup, `teacher_logits` drives kd_soft.
struct Batch {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
    std::vector<std::vector<double>> soft_targets;
    std::vector<std::vector<double>> teacher_logits;

    std::size_t size() const { return inputs.size(); }
};

// Loss and d(loss)/d(logits) for a single sample.
struct LogitLoss {
    double loss = 0.0;
    std::vector<double> dlogits;
};

LogitLoss loss_on_logits(std::span<const double> logits, const LossSpec& spec, int label,
                         std::span<const double> soft_target = {},
                         std::span<const double> teacher_logits = {});

// ===== Forward / backward =====

std::vector<double> forward_logits(const ModelSpec& spec, const ParamVector& theta,
                                   std::span<const double> x);

struct BatchEval {
    double loss = 0.0;          // mean over the batch
    double mean_entropy = 0.0;  // mean predictive entropy of the batch at T=1
    ParamVector grad;           // d(mean loss)/d(theta)
};

// Mean loss and gradient over a batch via backprop. `freeze_head` zeroes the
// gradient of the final layer (weight and bias).
BatchEval eval_batch(const ModelSpec& spec, const ParamVector& theta, const Batch& batch,
                     const LossSpec& loss, bool freeze_head = false);

ParamVector grad_loss(const ModelSpec& spec, const ParamVector& theta, const Batch& batch,
                      const LossSpec& loss);

}  // namespace tvc::nn
