#include "tvc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace tvc::metrics {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

int argmax_lowest(std::span<const double> v) {
    require(!v.empty(), "argmax_lowest: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

double accuracy(const nn::ModelSpec& spec, const nn::ParamVector& theta, const nn::Dataset& data) {
    data.validate(spec.input_dim, spec.num_classes);
    require(data.size() > 0, "accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = nn::forward_logits(spec, theta, data.inputs[i]);
        if (argmax_lowest(logits) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double normalized_accuracy(double merged_acc, double individual_acc) {
    require(individual_acc > 0.0, "normalized_accuracy: individual accuracy must be > 0");
    require(merged_acc >= 0.0, "normalized_accuracy: merged accuracy must be >= 0");
    return merged_acc / individual_acc;
}

double predictive_entropy(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                          const nn::Dataset& data) {
    data.validate(spec.input_dim, spec.num_classes);
    require(data.size() > 0, "predictive_entropy: empty dataset");
    double h = 0.0;
    for (const auto& x : data.inputs) {
        const auto logits = nn::forward_logits(spec, theta, x);
        h += linalg::entropy(linalg::softmax_temp(logits, 1.0));
    }
    return h / static_cast<double>(data.size());
}

// ===== Reliability / ECE =====

ReliabilityReport reliability_from_scores(std::span<const double> confidences,
                                          std::span<const std::uint8_t> correct,
                                          std::size_t num_bins) {
    require(confidences.size() == correct.size(), "reliability: confidence/correct length mismatch");
    require(!confidences.empty(), "reliability: no samples");
    require(num_bins >= 1, "reliability: num_bins must be >= 1");
    for (double c : confidences)
        require(c >= 0.0 && c <= 1.0, "reliability: confidence outside [0, 1]");

    std::vector<std::size_t> count(num_bins, 0);
    std::vector<double> conf_sum(num_bins, 0.0);
    std::vector<std::size_t> hit(num_bins, 0);
    const double width = 1.0 / static_cast<double>(num_bins);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        std::size_t b = static_cast<std::size_t>(confidences[i] / width);
        if (b >= num_bins) b = num_bins - 1;  // confidence exactly 1.0
        ++count[b];
        conf_sum[b] += confidences[i];
        hit[b] += correct[i] ? 1 : 0;
    }

    ReliabilityReport rep;
    rep.total = confidences.size();
    for (std::size_t b = 0; b < num_bins; ++b) {
        if (count[b] == 0) continue;  // empty bins stay out of the report and the ECE
        ReliabilityBin bin;
        bin.lo = width * static_cast<double>(b);
        bin.hi = width * static_cast<double>(b + 1);
        bin.count = count[b];
        bin.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
        bin.accuracy = static_cast<double>(hit[b]) / static_cast<double>(count[b]);
        rep.bins.push_back(bin);
        rep.ece += (static_cast<double>(count[b]) / static_cast<double>(rep.total)) *
                   std::abs(bin.accuracy - bin.mean_confidence);
    }
    return rep;
}

ReliabilityReport reliability(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                              const nn::Dataset& data, std::size_t num_bins) {
    data.validate(spec.input_dim, spec.num_classes);
    require(data.size() > 0, "reliability: empty dataset");
    std::vector<double> conf(data.size());
    std::vector<std::uint8_t> correct(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = nn::forward_logits(spec, theta, data.inputs[i]);
        const auto p = linalg::softmax_temp(logits, 1.0);
        const int pred = argmax_lowest(p.probs);
        conf[i] = p.probs[static_cast<std::size_t>(pred)];
        correct[i] = pred == data.labels[i] ? 1 : 0;
    }
    return reliability_from_scores(conf, correct, num_bins);
}

// ===== Temperature scaling =====

double mean_nll_logits(const std::vector<std::vector<double>>& logits,
                       std::span<const int> labels, double temperature) {
    require(logits.size() == labels.size(), "mean_nll: logits/labels length mismatch");
    require(!logits.empty(), "mean_nll: no samples");
    double nll = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto p = linalg::softmax_temp(logits[i], temperature);
        const int y = labels[i];
        require(y >= 0 && static_cast<std::size_t>(y) < p.size(), "mean_nll: label out of range");
        nll -= std::log(std::max(p.probs[static_cast<std::size_t>(y)], linalg::kProbFloor));
    }
    return nll / static_cast<double>(logits.size());
}

double fit_temperature_logits(const std::vector<std::vector<double>>& logits,
                              std::span<const int> labels) {
    require(!logits.empty() && logits.size() == labels.size(),
            "fit_temperature: logits/labels mismatch");
    const bool all_same =
        std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; });
    if (all_same) {
        std::cerr << "fit_temperature: every label is " << labels[0]
                  << "; calibration is ill-posed, returning T=1\n";
        return 1.0;
    }

    const auto nll = [&](double t) { return mean_nll_logits(logits, labels, t); };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = kTempLo, b = kTempHi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = nll(c), fd = nll(d);
    while (b - a > kTempTol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    return 0.5 * (a + b);
}

double temperature_scale_fit(const nn::ModelSpec& spec, const nn::ParamVector& theta,
                             const nn::Dataset& val) {
    val.validate(spec.input_dim, spec.num_classes);
    require(val.size() > 0, "temperature_scale_fit: empty dataset");
    std::vector<std::vector<double>> logits(val.size());
    for (std::size_t i = 0; i < val.size(); ++i)
        logits[i] = nn::forward_logits(spec, theta, val.inputs[i]);
    return fit_temperature_logits(logits, val.labels);
}

double mean_nll(const nn::ModelSpec& spec, const nn::ParamVector& theta, const nn::Dataset& data,
                double temperature) {
    data.validate(spec.input_dim, spec.num_classes);
    require(data.size() > 0, "mean_nll: empty dataset");
    std::vector<std::vector<double>> logits(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        logits[i] = nn::forward_logits(spec, theta, data.inputs[i]);
    return mean_nll_logits(logits, data.labels, temperature);
}

// ===== Interpolation sweep =====

std::vector<std::pair<double, double>> scaling_sweep(const nn::ModelSpec& spec,
                                                     const nn::ParamVector& theta_pre,
                                                     const nn::ParamVector& tau,
                                                     const nn::Dataset& data,
                                                     std::span<const double> kappa_grid) {
    require(!kappa_grid.empty(), "scaling_sweep: empty kappa grid");
    std::vector<std::pair<double, double>> out;
    out.reserve(kappa_grid.size());
    for (double kappa : kappa_grid) {
        const nn::ParamVector theta = nn::axpy(theta_pre, kappa, tau);
        out.emplace_back(kappa, accuracy(spec, theta, data));
    }
    return out;
}

std::vector<double> default_kappa_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 30; ++i) g.push_back(0.1 * i);
    return g;
}

// ===== Aggregation =====

EvalResult aggregate(std::vector<TaskEval> per_task) {
    require(!per_task.empty(), "aggregate: no task evals");
    EvalResult res;
    res.per_task = std::move(per_task);
    for (const auto& t : res.per_task) {
        res.mean_accuracy += t.accuracy;
        res.mean_normalized += t.normalized_accuracy;
        res.mean_entropy += t.entropy;
    }
    const double n = static_cast<double>(res.per_task.size());
    res.mean_accuracy /= n;
    res.mean_normalized /= n;
    res.mean_entropy /= n;
    return res;
}

}  // namespace tvc::metrics
