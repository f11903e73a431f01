#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tvc/linalg.hpp"

namespace tvc::theory {

// One analytic task: J(theta) = g . theta + 0.5 theta^T H theta around
// theta = 0, plus a calibration penalty 0.5 theta^T (lambda_cal A) theta +
// lambda_cal b . theta. H must be SPD; A is SPD or zero.
struct QuadTask {
    linalg::DenseMatrix h;
    std::vector<double> g;
    linalg::DenseMatrix a;
    std::vector<double> b;
    double lambda_cal = 0.0;

    std::size_t dim() const { return g.size(); }
    // Shape/symmetry/positive-definiteness checks (std::invalid_argument).
    void validate() const;
};

// Note on naming: MergeCoeffs.alpha / beta_m weight the two task vectors in
// the merged model. They are unrelated to the label-smoothing alpha or Adam
// betas elsewhere in this library; beta_m carries the _m to keep that apart.
struct MergeCoeffs {
    double alpha = 1.0;
    double beta_m = 1.0;

    void validate() const;  // both strictly positive
};

// Minimizer of the plain quadratic: tau = -H^{-1} g (Cholesky solve). Throws
// std::runtime_error when H's condition number exceeds 1e12.
std::vector<double> newton_task_vector(const QuadTask& q);

// Minimizer with the calibration penalty: -(H + lambda A)^{-1} (g + lambda b).
std::vector<double> calibrated_task_vector_exact(const QuadTask& q);

// First-order expansion in lambda_cal: tau_ce - lambda H^{-1} b, plus
// optionally + lambda H^{-1} A H^{-1} g (the complete first-order term).
std::vector<double> calibrated_task_vector_firstorder(const QuadTask& q,
                                                      bool full_firstorder = false);

// Truncated Neumann series for (H + lambda A)^{-1}:
//   sum_{k=0..order} (-lambda H^{-1} A)^k H^{-1}.
// Requires spectral norm ||lambda H^{-1} A|| < 1; the error message carries
// the measured value.
linalg::DenseMatrix neumann_inverse(const linalg::DenseMatrix& h, const linalg::DenseMatrix& a,
                                    double lambda, int order = 1);

// Plain-task objective value J(theta) = g . theta + 0.5 theta^T H theta.
double quad_ce_loss(const QuadTask& q, std::span<const double> theta);

struct LossDelta {
    double exact = 0.0;       // J_i(theta_cal_merged) - J_i(theta_ce_merged)
    double firstorder = 0.0;  // alpha * (g_i . delta_1) + beta_m * (g_i . delta_2)
};

// Merged-model degradation of task `eval_task` (1 or 2) when both task
// vectors carry their calibration penalties, with delta_j = -lambda_j
// H_j^{-1} b_j as the first-order prediction.
LossDelta merged_loss_delta(const QuadTask& q1, const QuadTask& q2, const MergeCoeffs& coeffs,
                            int eval_task);

// Seeded random instance: H = Q diag(ev) Q^T with eigenvalues in [0.5, 4],
// g and b unit-normalized then scaled by g_scale / 1, A likewise SPD (or
// zero when a_zero). Deterministic per seed.
QuadTask random_quad_task(std::size_t dim, std::uint64_t seed, double lambda_cal,
                          double g_scale = 1.0, bool a_zero = false);

}  // namespace tvc::theory
