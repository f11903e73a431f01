#include "tvc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tvc::nn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

double activate(Activation a, double z) {
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(Activation a, double z) {
    if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

}  // namespace

// ===== Model description =====

std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation: " + s);
}

void ModelSpec::validate() const {
    require(input_dim >= 1, "ModelSpec: input_dim must be >= 1");
    require(num_classes >= 2, "ModelSpec: num_classes must be >= 2");
    for (std::size_t h : hidden_dims) require(h >= 1, "ModelSpec: hidden dim must be >= 1");
}

std::vector<ShapeEntry> shape_map_for(const ModelSpec& spec) {
    spec.validate();
    std::vector<ShapeEntry> map;
    std::size_t in = spec.input_dim;
    std::vector<std::size_t> outs = spec.hidden_dims;
    outs.push_back(spec.num_classes);
    for (std::size_t l = 0; l < outs.size(); ++l) {
        const std::string id = std::to_string(l);
        map.push_back({"w" + id, ParamKind::weight, outs[l], in});
        map.push_back({"b" + id, ParamKind::bias, outs[l], 1});
        in = outs[l];
    }
    return map;
}

// ===== Parameters =====

std::size_t ParamVector::offset_of(std::size_t entry) const {
    require(entry < shape_map.size(), "ParamVector: entry out of range");
    std::size_t off = 0;
    for (std::size_t i = 0; i < entry; ++i) off += shape_map[i].size();
    return off;
}

void ParamVector::validate() const {
    std::size_t total = 0;
    for (const auto& e : shape_map) {
        require(e.size() > 0, "ParamVector: empty shape entry " + e.name);
        total += e.size();
    }
    require(total == values.size(), "ParamVector: shape map covers " + std::to_string(total) +
                                        " values, vector holds " + std::to_string(values.size()));
}

namespace {

void require_same_shape(const ParamVector& a, const ParamVector& b, const char* op) {
    if (a.shape_map != b.shape_map || a.values.size() != b.values.size())
        throw std::invalid_argument(std::string(op) + ": parameter shape maps differ");
}

}  // namespace

ParamVector& ParamVector::operator+=(const ParamVector& o) {
    require_same_shape(*this, o, "ParamVector +=");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
    require_same_shape(*this, o, "ParamVector -=");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
    return *this;
}

ParamVector& ParamVector::operator*=(double c) {
    for (double& v : values) v *= c;
    return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { a += b; return a; }
ParamVector operator-(ParamVector a, const ParamVector& b) { a -= b; return a; }
ParamVector operator*(ParamVector a, double c) { a *= c; return a; }

ParamVector axpy(const ParamVector& a, double c, const ParamVector& b) {
    require_same_shape(a, b, "axpy");
    ParamVector out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += c * b.values[i];
    return out;
}

ParamVector zeros_like(const ModelSpec& spec) {
    ParamVector p;
    p.shape_map = shape_map_for(spec);
    std::size_t total = 0;
    for (const auto& e : p.shape_map) total += e.size();
    p.values.assign(total, 0.0);
    return p;
}

ParamVector he_uniform_init(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector p = zeros_like(spec);
    std::mt19937_64 rng(seed);
    std::size_t off = 0;
    for (const auto& e : p.shape_map) {
        if (e.kind == ParamKind::weight) {
            const double limit = std::sqrt(6.0 / static_cast<double>(e.cols));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (std::size_t i = 0; i < e.size(); ++i) p.values[off + i] = dist(rng);
        }
        off += e.size();
    }
    return p;
}

double l2_norm(const ParamVector& p) {
    return linalg::norm2(p.values);
}

std::vector<std::pair<std::string, double>> per_layer_norms(const ParamVector& p) {
    p.validate();
    std::vector<std::pair<std::string, double>> out;
    std::size_t off = 0;
    for (const auto& e : p.shape_map) {
        double s = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) s += p.values[off + i] * p.values[off + i];
        out.emplace_back(e.name, std::sqrt(s));
        off += e.size();
    }
    return out;
}

linalg::DenseMatrix layer_matrix(const ParamVector& p, std::size_t entry) {
    const auto& e = p.shape_map.at(entry);
    const std::size_t off = p.offset_of(entry);
    linalg::DenseMatrix m(e.rows, e.cols);
    std::copy(p.values.begin() + off, p.values.begin() + off + e.size(), m.data.begin());
    return m;
}

void set_layer_matrix(ParamVector& p, std::size_t entry, const linalg::DenseMatrix& m) {
    const auto& e = p.shape_map.at(entry);
    require(m.rows == e.rows && m.cols == e.cols, "set_layer_matrix: shape mismatch for " + e.name);
    const std::size_t off = p.offset_of(entry);
    std::copy(m.data.begin(), m.data.end(), p.values.begin() + off);
}

// ===== Data =====

void Dataset::validate(std::size_t input_dim, std::size_t num_classes) const {
    require(inputs.size() == labels.size(), "Dataset: inputs/labels length mismatch");
    for (const auto& x : inputs)
        require(x.size() == input_dim, "Dataset: input dimension mismatch");
    for (int y : labels)
        require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "Dataset: label out of range");
}

// ===== Losses =====

std::string to_string(LossSpec::Kind k) {
    switch (k) {
        case LossSpec::Kind::cross_entropy: return "cross_entropy";
        case LossSpec::Kind::label_smoothing: return "label_smoothing";
        case LossSpec::Kind::mixup: return "mixup";
        case LossSpec::Kind::focal: return "focal";
        case LossSpec::Kind::kd_soft: return "kd_soft";
    }
    return "?";
}

LossSpec::Kind loss_kind_from_string(const std::string& s) {
    if (s == "cross_entropy") return LossSpec::Kind::cross_entropy;
    if (s == "label_smoothing") return LossSpec::Kind::label_smoothing;
    if (s == "mixup") return LossSpec::Kind::mixup;
    if (s == "focal") return LossSpec::Kind::focal;
    if (s == "kd_soft") return LossSpec::Kind::kd_soft;
    throw std::invalid_argument("unknown loss kind: " + s);
}

namespace {

constexpr double kPClamp = 1e-12;

LogitLoss soft_target_ce(std::span<const double> logits, std::span<const double> q) {
    const auto p = linalg::softmax_temp(logits, 1.0);
    LogitLoss out;
    out.dlogits.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (q[c] > 0.0) out.loss -= q[c] * std::log(std::max(p.probs[c], kPClamp));
        out.dlogits[c] = p.probs[c] - q[c];
    }
    return out;
}

}  // namespace

LogitLoss loss_on_logits(std::span<const double> logits, const LossSpec& spec, int label,
                         std::span<const double> soft_target,
                         std::span<const double> teacher_logits) {
    require(!logits.empty(), "loss_on_logits: empty logits");
    const std::size_t c_count = logits.size();

    switch (spec.kind) {
        case LossSpec::Kind::cross_entropy:
        case LossSpec::Kind::label_smoothing: {
            require(label >= 0 && static_cast<std::size_t>(label) < c_count,
                    "loss_on_logits: label out of range");
            const double alpha = spec.kind == LossSpec::Kind::cross_entropy ? 0.0 : spec.alpha;
            require(alpha >= 0.0 && alpha < 1.0, "loss_on_logits: alpha must be in [0, 1)");
            std::vector<double> q(c_count, alpha / static_cast<double>(c_count));
            q[static_cast<std::size_t>(label)] += 1.0 - alpha;
            return soft_target_ce(logits, q);
        }
        case LossSpec::Kind::mixup: {
            require(soft_target.size() == c_count, "loss_on_logits: soft target size mismatch");
            return soft_target_ce(logits, soft_target);
        }
        case LossSpec::Kind::focal: {
            require(label >= 0 && static_cast<std::size_t>(label) < c_count,
                    "loss_on_logits: label out of range");
            require(spec.gamma >= 0.0, "loss_on_logits: gamma must be >= 0");
            const auto p = linalg::softmax_temp(logits, 1.0);
            const std::size_t t = static_cast<std::size_t>(label);
            const double pt = std::clamp(p.probs[t], kPClamp, 1.0 - kPClamp);
            const double onem = 1.0 - pt;
            LogitLoss out;
            out.loss = -std::pow(onem, spec.gamma) * std::log(pt);
            // dL/dp_t, then through the softmax jacobian.
            const double dldpt =
                spec.gamma * std::pow(onem, spec.gamma - 1.0) * std::log(pt) - std::pow(onem, spec.gamma) / pt;
            out.dlogits.resize(c_count);
            for (std::size_t c = 0; c < c_count; ++c) {
                const double jac = pt * ((c == t ? 1.0 : 0.0) - p.probs[c]);
                out.dlogits[c] = dldpt * jac;
            }
            return out;
        }
        case LossSpec::Kind::kd_soft: {
            require(teacher_logits.size() == c_count, "loss_on_logits: teacher logits size mismatch");
            require(spec.t_tcr > 0.0 && spec.t_stu > 0.0, "loss_on_logits: temperatures must be > 0");
            const auto p_tcr = linalg::softmax_temp(teacher_logits, spec.t_tcr);
            const auto p_stu = linalg::softmax_temp(logits, spec.t_stu);
            LogitLoss out;
            out.loss = spec.t_tcr * spec.t_stu * linalg::kl_divergence(p_tcr, p_stu);
            out.dlogits.resize(c_count);
            for (std::size_t c = 0; c < c_count; ++c)
                out.dlogits[c] = spec.t_tcr * (p_stu.probs[c] - p_tcr.probs[c]);
            return out;
        }
    }
    throw std::invalid_argument("loss_on_logits: unknown loss kind");
}

// ===== Forward / backward =====

namespace {

struct LayerView {
    linalg::DenseMatrix w;
    std::vector<double> b;
};

std::vector<LayerView> unpack_layers(const ModelSpec& spec, const ParamVector& theta) {
    const auto expect = shape_map_for(spec);
    require(theta.shape_map == expect, "parameters do not match the model spec");
    theta.validate();
    std::vector<LayerView> layers(expect.size() / 2);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].w = layer_matrix(theta, 2 * l);
        const auto bm = layer_matrix(theta, 2 * l + 1);
        layers[l].b = bm.data;
    }
    return layers;
}

// Forward pass keeping pre-activations and activations for backprop.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;  // z per layer
    std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = activation of layer l
};

std::vector<double> forward_traced(const std::vector<LayerView>& layers, Activation activation,
                                   std::span<const double> x, ForwardTrace* trace) {
    std::vector<double> a(x.begin(), x.end());
    if (trace) trace->act.push_back(a);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& lay = layers[l];
        std::vector<double> z(lay.w.rows);
        for (std::size_t i = 0; i < lay.w.rows; ++i) {
            double s = lay.b[i];
            for (std::size_t j = 0; j < lay.w.cols; ++j) s += lay.w.at(i, j) * a[j];
            z[i] = s;
        }
        if (trace) trace->pre.push_back(z);
        if (l + 1 < layers.size()) {
            std::vector<double> na(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) na[i] = activate(activation, z[i]);
            a = std::move(na);
            if (trace) trace->act.push_back(a);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

}  // namespace

std::vector<double> forward_logits(const ModelSpec& spec, const ParamVector& theta,
                                   std::span<const double> x) {
    require(x.size() == spec.input_dim, "forward_logits: input dimension mismatch");
    const auto layers = unpack_layers(spec, theta);
    return forward_traced(layers, spec.activation, x, nullptr);
}

BatchEval eval_batch(const ModelSpec& spec, const ParamVector& theta, const Batch& batch,
                     const LossSpec& loss, bool freeze_head) {
    require(batch.size() > 0, "eval_batch: empty batch");
    const auto layers = unpack_layers(spec, theta);
    const std::size_t n_layers = layers.size();

    BatchEval out;
    out.grad = theta;
    std::fill(out.grad.values.begin(), out.grad.values.end(), 0.0);

    // Raw gradient blocks, merged into the flat vector at the end.
    std::vector<linalg::DenseMatrix> gw(n_layers);
    std::vector<std::vector<double>> gb(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        gw[l] = linalg::DenseMatrix(layers[l].w.rows, layers[l].w.cols);
        gb[l].assign(layers[l].b.size(), 0.0);
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        require(batch.inputs[s].size() == spec.input_dim, "eval_batch: input dimension mismatch");
        ForwardTrace trace;
        const auto logits = forward_traced(layers, spec.activation, batch.inputs[s], &trace);

        const int label = s < batch.labels.size() ? batch.labels[s] : -1;
        std::span<const double> soft =
            s < batch.soft_targets.size() ? std::span<const double>(batch.soft_targets[s])
                                          : std::span<const double>();
        std::span<const double> tl =
            s < batch.teacher_logits.size() ? std::span<const double>(batch.teacher_logits[s])
                                            : std::span<const double>();
        LogitLoss ll = loss_on_logits(logits, loss, label, soft, tl);
        out.loss += ll.loss * inv_n;
        out.mean_entropy += linalg::entropy(linalg::softmax_temp(logits, 1.0)) * inv_n;

        std::vector<double> delta = std::move(ll.dlogits);
        for (std::size_t li = n_layers; li-- > 0;) {
            const auto& a_in = trace.act[li];
            for (std::size_t i = 0; i < delta.size(); ++i) {
                const double d = delta[i] * inv_n;
                gb[li][i] += d;
                for (std::size_t j = 0; j < a_in.size(); ++j) gw[li].at(i, j) += d * a_in[j];
            }
            if (li == 0) break;
            const auto& lay = layers[li];
            std::vector<double> prev(lay.w.cols, 0.0);
            for (std::size_t j = 0; j < lay.w.cols; ++j) {
                double s2 = 0.0;
                for (std::size_t i = 0; i < lay.w.rows; ++i) s2 += lay.w.at(i, j) * delta[i];
                prev[j] = s2 * activate_grad(spec.activation, trace.pre[li - 1][j]);
            }
            delta = std::move(prev);
        }
    }

    if (freeze_head) {
        gw[n_layers - 1] = linalg::DenseMatrix(gw[n_layers - 1].rows, gw[n_layers - 1].cols);
        std::fill(gb[n_layers - 1].begin(), gb[n_layers - 1].end(), 0.0);
    }

    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::copy(gw[l].data.begin(), gw[l].data.end(), out.grad.values.begin() + off);
        off += gw[l].data.size();
        std::copy(gb[l].begin(), gb[l].end(), out.grad.values.begin() + off);
        off += gb[l].size();
    }
    return out;
}

ParamVector grad_loss(const ModelSpec& spec, const ParamVector& theta, const Batch& batch,
                      const LossSpec& loss) {
    return eval_batch(spec, theta, batch, loss).grad;
}

}  // namespace tvc::nn
