#include "tvc/merge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tvc::merge {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void check_inputs(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus) {
    require(!taus.empty(), "merge: no task vectors");
    theta_pre.validate();
    for (const auto& tv : taus)
        require(tv.delta.shape_map == theta_pre.shape_map &&
                    tv.delta.values.size() == theta_pre.values.size(),
                "merge: task vector shape map differs from theta_pre (" + tv.task_id + ")");
}

nn::ParamVector sum_taus(const std::vector<TaskVector>& taus) {
    nn::ParamVector s = taus[0].delta;
    for (std::size_t t = 1; t < taus.size(); ++t) s += taus[t].delta;
    return s;
}

}  // namespace

TaskVector compute_task_vector(const nn::ParamVector& theta_t, const nn::ParamVector& theta_pre,
                               std::string task_id, std::string train_meta) {
    require(theta_t.shape_map == theta_pre.shape_map &&
                theta_t.values.size() == theta_pre.values.size(),
            "compute_task_vector: shape maps differ");
    TaskVector tv;
    tv.delta = theta_t;
    tv.delta -= theta_pre;
    tv.task_id = std::move(task_id);
    tv.train_meta = std::move(train_meta);
    return tv;
}

std::string to_string(Method m) {
    switch (m) {
        case Method::uniform: return "uniform";
        case Method::task_arithmetic: return "task_arithmetic";
        case Method::ties: return "ties";
        case Method::consensus: return "consensus";
        case Method::tsvm: return "tsvm";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : all_methods())
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown merge method: " + s);
}

std::vector<Method> all_methods() {
    return {Method::uniform, Method::task_arithmetic, Method::ties, Method::consensus, Method::tsvm};
}

std::vector<double> MergeConfig::default_lambda_grid() {
    // Dense to 1.0 where task arithmetic usually lands, then a coarser tail:
    // trimmed-mean methods (ties, consensus) often want scales above 1.
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(0.05 * i);
    for (int i = 11; i <= 20; ++i) g.push_back(0.1 * i);
    return g;
}

void MergeConfig::validate() const {
    require(ties_keep_fraction > 0.0 && ties_keep_fraction <= 1.0,
            "MergeConfig: ties_keep_fraction must be in (0, 1]");
    require(tall_weight >= 0.0, "MergeConfig: tall_weight must be >= 0");
    require(consensus_k >= 1, "MergeConfig: consensus_k must be >= 1");
    for (double l : lambda_grid)
        require(l >= 0.0, "MergeConfig: lambda grid entries must be >= 0");
}

std::size_t MaskVector::count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
}

double MaskVector::density() const {
    return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

// ===== uniform / task arithmetic =====

nn::ParamVector merge_uniform(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus) {
    check_inputs(theta_pre, taus);
    nn::ParamVector s = sum_taus(taus);
    s *= 1.0 / static_cast<double>(taus.size());
    s += theta_pre;
    return s;
}

nn::ParamVector merge_task_arithmetic(const nn::ParamVector& theta_pre,
                                      const std::vector<TaskVector>& taus, double lambda) {
    check_inputs(theta_pre, taus);
    nn::ParamVector s = sum_taus(taus);
    s *= lambda;
    s += theta_pre;
    return s;
}

// ===== TIES =====

std::vector<MaskVector> ties_masks(const std::vector<TaskVector>& taus, double keep_fraction) {
    require(!taus.empty(), "ties_masks: no task vectors");
    require(keep_fraction > 0.0 && keep_fraction <= 1.0, "ties_masks: keep_fraction must be in (0, 1]");
    const std::size_t d = taus[0].delta.values.size();
    const std::size_t keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(d))));
    std::vector<MaskVector> masks(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t) {
        const auto& v = taus[t].delta.values;
        std::vector<std::size_t> idx(d);
        std::iota(idx.begin(), idx.end(), 0);
        // Magnitude-descending, index-ascending on ties: deterministic trim.
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(v[a]) > std::abs(v[b]);
        });
        masks[t].bits.assign(d, 0);
        for (std::size_t k = 0; k < std::min(keep, d); ++k) masks[t].bits[idx[k]] = 1;
    }
    return masks;
}

nn::ParamVector merge_ties(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           double lambda, double keep_fraction) {
    check_inputs(theta_pre, taus);
    const auto masks = ties_masks(taus, keep_fraction);
    const std::size_t d = theta_pre.values.size();

    nn::ParamVector merged = theta_pre;
    for (std::size_t j = 0; j < d; ++j) {
        double pos_mass = 0.0, neg_mass = 0.0;
        for (std::size_t t = 0; t < taus.size(); ++t) {
            if (!masks[t].bits[j]) continue;
            const double v = taus[t].delta.values[j];
            if (v > 0.0) pos_mass += v;
            else neg_mass -= v;
        }
        if (pos_mass == 0.0 && neg_mass == 0.0) continue;  // trimmed everywhere -> 0
        const bool positive = pos_mass >= neg_mass;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < taus.size(); ++t) {
            if (!masks[t].bits[j]) continue;
            const double v = taus[t].delta.values[j];
            if ((positive && v > 0.0) || (!positive && v < 0.0)) {
                sum += v;
                ++n;
            }
        }
        if (n > 0) merged.values[j] += lambda * (sum / static_cast<double>(n));
    }
    return merged;
}

// ===== Consensus =====

ConsensusMasks consensus_masks(const std::vector<TaskVector>& taus, double tall_weight,
                               std::size_t k) {
    require(!taus.empty(), "consensus_masks: no task vectors");
    require(tall_weight >= 0.0, "consensus_masks: tall_weight must be >= 0");
    const std::size_t d = taus[0].delta.values.size();
    const std::size_t t_count = taus.size();

    std::vector<double> total(d, 0.0);
    for (const auto& tv : taus)
        for (std::size_t j = 0; j < d; ++j) total[j] += tv.delta.values[j];

    ConsensusMasks out;
    out.tall.resize(t_count);
    std::vector<std::size_t> votes(d, 0);
    for (std::size_t t = 0; t < t_count; ++t) {
        out.tall[t].bits.assign(d, 0);
        for (std::size_t j = 0; j < d; ++j) {
            const double own = std::abs(taus[t].delta.values[j]);
            const double others = std::abs(total[j] - taus[t].delta.values[j]);
            if (own >= tall_weight * others) {
                out.tall[t].bits[j] = 1;
                ++votes[j];
            }
        }
    }
    out.consensus.bits.assign(d, 0);
    for (std::size_t j = 0; j < d; ++j) out.consensus.bits[j] = votes[j] >= k ? 1 : 0;
    return out;
}

nn::ParamVector merge_consensus(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                                double lambda, double tall_weight, std::size_t k) {
    check_inputs(theta_pre, taus);
    const auto masks = consensus_masks(taus, tall_weight, k);
    nn::ParamVector merged = theta_pre;
    const std::size_t d = theta_pre.values.size();
    for (std::size_t j = 0; j < d; ++j) {
        if (!masks.consensus.bits[j]) continue;
        double s = 0.0;
        for (const auto& tv : taus) s += tv.delta.values[j];
        merged.values[j] += lambda * s;
    }
    return merged;
}

// ===== TSVM =====

namespace {

struct TaskFactors {
    linalg::DenseMatrix u;       // rows x r
    std::vector<double> s;       // r
    linalg::DenseMatrix v;       // cols x r
};

linalg::DenseMatrix take_cols(const linalg::DenseMatrix& m, std::size_t r) {
    linalg::DenseMatrix out(m.rows, r);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < r; ++j) out.at(i, j) = m.at(i, j);
    return out;
}

linalg::DenseMatrix hstack(const std::vector<linalg::DenseMatrix>& blocks) {
    std::size_t cols = 0;
    for (const auto& b : blocks) cols += b.cols;
    linalg::DenseMatrix out(blocks[0].rows, cols);
    std::size_t off = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.rows; ++i)
            for (std::size_t j = 0; j < b.cols; ++j) out.at(i, off + j) = b.at(i, j);
        off += b.cols;
    }
    return out;
}

constexpr double kWhitenFloor = 1e-10;

// M (M^T M)^{-1/2}; `floored` reports a rank-deficient Gram matrix.
linalg::DenseMatrix whiten(const linalg::DenseMatrix& m, bool* floored) {
    const linalg::DenseMatrix gram = linalg::matmul(linalg::transpose(m), m);
    bool lift_hit = false;
    const linalg::DenseMatrix inv_sqrt = linalg::inverse_sqrt_spd(gram, kWhitenFloor, &lift_hit);
    if (floored) *floored = lift_hit;
    return linalg::matmul(m, inv_sqrt);
}

}  // namespace

nn::ParamVector merge_tsvm(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           double lambda, const MergeConfig& cfg,
                           std::vector<std::string>* warnings) {
    check_inputs(theta_pre, taus);
    cfg.validate();
    const std::size_t t_count = taus.size();

    nn::ParamVector merged = theta_pre;
    for (std::size_t entry = 0; entry < theta_pre.shape_map.size(); ++entry) {
        const auto& se = theta_pre.shape_map[entry];
        const std::size_t off = theta_pre.offset_of(entry);
        const bool matrix_shaped = se.kind == nn::ParamKind::weight && se.rows > 1 && se.cols > 1;

        if (!matrix_shaped) {
            for (std::size_t i = 0; i < se.size(); ++i) {
                double s = 0.0;
                for (const auto& tv : taus) s += tv.delta.values[off + i];
                merged.values[off + i] += lambda * s;
            }
            continue;
        }

        const std::size_t min_dim = std::min(se.rows, se.cols);
        std::size_t rank = min_dim;
        if (cfg.tsvm_rank_policy == TsvmRankPolicy::per_task_topk) {
            rank = cfg.tsvm_rank > 0 ? std::min(cfg.tsvm_rank, min_dim)
                                     : std::max<std::size_t>(1, min_dim / t_count);
        }

        std::vector<TaskFactors> factors(t_count);
        std::vector<linalg::DenseMatrix> u_blocks, v_blocks;
        for (std::size_t t = 0; t < t_count; ++t) {
            const linalg::DenseMatrix layer = nn::layer_matrix(taus[t].delta, entry);
            const linalg::SvdResult svd = linalg::svd_thin(layer);
            factors[t].u = take_cols(svd.u, rank);
            factors[t].v = take_cols(svd.v, rank);
            factors[t].s.assign(svd.singular.begin(), svd.singular.begin() + rank);
            u_blocks.push_back(factors[t].u);
            v_blocks.push_back(factors[t].v);
        }

        bool u_floored = false, v_floored = false;
        const linalg::DenseMatrix u_white = whiten(hstack(u_blocks), &u_floored);
        const linalg::DenseMatrix v_white = whiten(hstack(v_blocks), &v_floored);
        if ((u_floored || v_floored) && warnings)
            warnings->push_back("tsvm: rank-deficient whitening Gram matrix on layer " + se.name +
                                "; lifted eigenvalues by 1e-10");

        // sum_t U_t S_t V_t^T from the whitened column blocks.
        linalg::DenseMatrix combined(se.rows, se.cols);
        for (std::size_t t = 0; t < t_count; ++t) {
            const std::size_t base = t * rank;
            for (std::size_t r = 0; r < rank; ++r) {
                const double sv = factors[t].s[r];
                if (sv == 0.0) continue;
                for (std::size_t i = 0; i < se.rows; ++i) {
                    const double ui = u_white.at(i, base + r) * sv;
                    if (ui == 0.0) continue;
                    for (std::size_t j = 0; j < se.cols; ++j)
                        combined.at(i, j) += ui * v_white.at(j, base + r);
                }
            }
        }
        for (std::size_t i = 0; i < se.size(); ++i)
            merged.values[off + i] += lambda * combined.data[i];
    }
    return merged;
}

nn::ParamVector merge_with(const nn::ParamVector& theta_pre, const std::vector<TaskVector>& taus,
                           const MergeConfig& cfg, double lambda,
                           std::vector<std::string>* warnings) {
    switch (cfg.method) {
        case Method::uniform: return merge_uniform(theta_pre, taus);
        case Method::task_arithmetic: return merge_task_arithmetic(theta_pre, taus, lambda);
        case Method::ties: return merge_ties(theta_pre, taus, lambda, cfg.ties_keep_fraction);
        case Method::consensus:
            return merge_consensus(theta_pre, taus, lambda, cfg.tall_weight, cfg.consensus_k);
        case Method::tsvm: return merge_tsvm(theta_pre, taus, lambda, cfg, warnings);
    }
    throw std::invalid_argument("merge_with: unknown method");
}

// ===== Diagnostics =====

std::vector<double> cosine_diagnostics(const std::vector<TaskVector>& taus) {
    require(!taus.empty(), "cosine_diagnostics: no task vectors");
    const nn::ParamVector total = sum_taus(taus);
    std::vector<double> out;
    out.reserve(taus.size());
    for (const auto& tv : taus)
        out.push_back(linalg::cosine_similarity(total.values, tv.delta.values));
    return out;
}

// ===== Lambda tuning =====

LambdaSearchResult tune_lambda(const std::function<nn::ParamVector(double)>& merge_at,
                               const std::vector<double>& lambda_grid,
                               const std::function<double(const nn::ParamVector&)>& score) {
    require(!lambda_grid.empty(), "tune_lambda: empty lambda grid");
    require(static_cast<bool>(merge_at) && static_cast<bool>(score),
            "tune_lambda: merge_at and score must be callable");
    LambdaSearchResult res;
    double best = -std::numeric_limits<double>::infinity();
    for (double lam : lambda_grid) {
        const double sc = score(merge_at(lam));
        res.scores.emplace_back(lam, sc);
        if (sc > best) {  // strict: ties stay with the earlier (smaller) lambda
            best = sc;
            res.lambda_star = lam;
        }
    }
    return res;
}

}  // namespace tvc::merge
