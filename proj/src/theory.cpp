#include "tvc/theory.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace tvc::theory {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_symmetric(const linalg::DenseMatrix& m, const char* what) {
    require(m.rows == m.cols, std::string(what) + ": must be square");
    const double ref = std::max(linalg::max_abs(m), 1e-300);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            require(std::abs(m.at(i, j) - m.at(j, i)) <= 1e-9 * ref,
                    std::string(what) + ": must be symmetric");
}

bool is_zero(const linalg::DenseMatrix& m) {
    for (double v : m.data)
        if (v != 0.0) return false;
    return true;
}

double spectral_norm(const linalg::DenseMatrix& m) {
    return linalg::svd_thin(m).singular.front();
}

linalg::DenseMatrix invert_spd(const linalg::DenseMatrix& m) {
    const std::size_t n = m.rows;
    linalg::DenseMatrix inv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        const auto col = linalg::cholesky_solve(m, e);
        for (std::size_t i = 0; i < n; ++i) inv.at(i, j) = col[i];
    }
    return inv;
}

}  // namespace

void QuadTask::validate() const {
    require(!g.empty(), "QuadTask: empty gradient");
    require(h.rows == g.size() && h.cols == g.size(), "QuadTask: H shape mismatch");
    require(a.rows == g.size() && a.cols == g.size(), "QuadTask: A shape mismatch");
    require(b.size() == g.size(), "QuadTask: b length mismatch");
    require(std::isfinite(lambda_cal) && lambda_cal >= 0.0, "QuadTask: lambda_cal must be >= 0");
    h.check_finite("QuadTask H");
    a.check_finite("QuadTask A");
    require_symmetric(h, "QuadTask H");
    const auto eig_h = linalg::sym_eig(h);
    require(eig_h.values.front() > 0.0, "QuadTask: H must be positive definite");
    if (!is_zero(a)) {
        require_symmetric(a, "QuadTask A");
        const auto eig_a = linalg::sym_eig(a);
        require(eig_a.values.front() > 0.0, "QuadTask: A must be positive definite or zero");
    }
}

void MergeCoeffs::validate() const {
    require(alpha > 0.0 && beta_m > 0.0, "MergeCoeffs: alpha and beta_m must be > 0");
}

std::vector<double> newton_task_vector(const QuadTask& q) {
    q.validate();
    const auto eig = linalg::sym_eig(q.h);
    const double cond = eig.values.back() / eig.values.front();
    if (!(cond < 1e12))
        throw std::runtime_error("newton_task_vector: H condition number " + std::to_string(cond) +
                                 " exceeds 1e12");
    auto tau = linalg::cholesky_solve(q.h, q.g);
    for (double& v : tau) v = -v;
    return tau;
}

std::vector<double> calibrated_task_vector_exact(const QuadTask& q) {
    q.validate();
    const linalg::DenseMatrix reg = linalg::add(q.h, linalg::scale(q.a, q.lambda_cal));
    const auto eig = linalg::sym_eig(reg);
    require(eig.values.front() > 0.0, "calibrated_task_vector_exact: H + lambda A not positive definite");
    std::vector<double> rhs(q.dim());
    for (std::size_t i = 0; i < q.dim(); ++i) rhs[i] = q.g[i] + q.lambda_cal * q.b[i];
    auto tau = linalg::cholesky_solve(reg, rhs);
    for (double& v : tau) v = -v;
    return tau;
}

std::vector<double> calibrated_task_vector_firstorder(const QuadTask& q, bool full_firstorder) {
    q.validate();
    auto tau = newton_task_vector(q);  // -H^{-1} g
    const auto hinv_b = linalg::cholesky_solve(q.h, q.b);
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] -= q.lambda_cal * hinv_b[i];
    if (full_firstorder) {
        // + lambda H^{-1} A H^{-1} g
        const auto hinv_g = linalg::cholesky_solve(q.h, q.g);
        const auto a_hinv_g = linalg::matvec(q.a, hinv_g);
        const auto term = linalg::cholesky_solve(q.h, a_hinv_g);
        for (std::size_t i = 0; i < tau.size(); ++i) tau[i] += q.lambda_cal * term[i];
    }
    return tau;
}

linalg::DenseMatrix neumann_inverse(const linalg::DenseMatrix& h, const linalg::DenseMatrix& a,
                                    double lambda, int order) {
    require(order >= 0, "neumann_inverse: order must be >= 0");
    require(h.rows == h.cols && a.rows == a.cols && h.rows == a.rows,
            "neumann_inverse: H and A must be square with matching size");
    require_symmetric(h, "neumann_inverse H");
    const auto eig = linalg::sym_eig(h);
    require(eig.values.front() > 0.0, "neumann_inverse: H must be positive definite");

    const linalg::DenseMatrix h_inv = invert_spd(h);
    const linalg::DenseMatrix step = linalg::scale(linalg::matmul(h_inv, a), -lambda);
    const double contraction = spectral_norm(step);
    if (!(contraction < 1.0))
        throw std::runtime_error("neumann_inverse: ||lambda H^{-1} A|| = " +
                                 std::to_string(contraction) + " is not < 1; series diverges");

    // sum_{k=0..order} step^k H^{-1}, Horner style.
    linalg::DenseMatrix acc = h_inv;
    for (int k = 0; k < order; ++k) acc = linalg::add(h_inv, linalg::matmul(step, acc));
    return acc;
}

double quad_ce_loss(const QuadTask& q, std::span<const double> theta) {
    require(theta.size() == q.dim(), "quad_ce_loss: dimension mismatch");
    const auto h_theta = linalg::matvec(q.h, theta);
    return linalg::dot(q.g, theta) + 0.5 * linalg::dot(theta, h_theta);
}

LossDelta merged_loss_delta(const QuadTask& q1, const QuadTask& q2, const MergeCoeffs& coeffs,
                            int eval_task) {
    coeffs.validate();
    require(eval_task == 1 || eval_task == 2, "merged_loss_delta: eval_task must be 1 or 2");
    require(q1.dim() == q2.dim(), "merged_loss_delta: task dimensions differ");

    const auto tau1_ce = newton_task_vector(q1);
    const auto tau2_ce = newton_task_vector(q2);
    const auto tau1_cal = calibrated_task_vector_exact(q1);
    const auto tau2_cal = calibrated_task_vector_exact(q2);

    const std::size_t n = q1.dim();
    std::vector<double> merged_ce(n), merged_cal(n);
    for (std::size_t i = 0; i < n; ++i) {
        merged_ce[i] = coeffs.alpha * tau1_ce[i] + coeffs.beta_m * tau2_ce[i];
        merged_cal[i] = coeffs.alpha * tau1_cal[i] + coeffs.beta_m * tau2_cal[i];
    }

    const QuadTask& qe = eval_task == 1 ? q1 : q2;
    LossDelta out;
    out.exact = quad_ce_loss(qe, merged_cal) - quad_ce_loss(qe, merged_ce);

    // delta_j = -lambda_j H_j^{-1} b_j, dotted with the eval task's gradient.
    auto delta1 = linalg::cholesky_solve(q1.h, q1.b);
    auto delta2 = linalg::cholesky_solve(q2.h, q2.b);
    for (double& v : delta1) v *= -q1.lambda_cal;
    for (double& v : delta2) v *= -q2.lambda_cal;
    out.firstorder = coeffs.alpha * linalg::dot(qe.g, delta1) + coeffs.beta_m * linalg::dot(qe.g, delta2);
    return out;
}

QuadTask random_quad_task(std::size_t dim, std::uint64_t seed, double lambda_cal, double g_scale,
                          bool a_zero) {
    require(dim >= 1, "random_quad_task: dim must be >= 1");
    require(g_scale > 0.0, "random_quad_task: g_scale must be > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> ev_range(0.5, 4.0);

    const auto random_spd = [&]() {
        linalg::DenseMatrix raw(dim, dim);
        for (double& v : raw.data) v = gauss(rng);
        const auto svd = linalg::svd_thin(raw);  // svd.u: random orthogonal
        linalg::DenseMatrix d(dim, dim);
        for (std::size_t i = 0; i < dim; ++i) d.at(i, i) = ev_range(rng);
        return linalg::matmul(linalg::matmul(svd.u, d), linalg::transpose(svd.u));
    };
    const auto random_unit = [&](double scale_to) {
        std::vector<double> v(dim);
        for (double& x : v) x = gauss(rng);
        const double n = linalg::norm2(v);
        for (double& x : v) x = x / n * scale_to;
        return v;
    };

    QuadTask q;
    q.h = random_spd();
    q.g = random_unit(g_scale);
    q.a = a_zero ? linalg::DenseMatrix(dim, dim) : random_spd();
    q.b = random_unit(1.0);
    q.lambda_cal = lambda_cal;
    q.validate();
    return q;
}

}  // namespace tvc::theory
