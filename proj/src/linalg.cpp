#include "tvc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tvc::linalg {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

// ===== DenseMatrix =====

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<double> d)
    : rows(r), cols(c), data(std::move(d)) {
    require(data.size() == rows * cols, "DenseMatrix: data size does not match rows*cols");
}

void DenseMatrix::check_finite(const std::string& what) const {
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument(what + ": non-finite entry");
    }
}

DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    DenseMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += aik * b.at(k, j);
        }
    }
    return c;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "add: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

DenseMatrix scale(const DenseMatrix& m, double c) {
    DenseMatrix r = m;
    for (double& v : r.data) v *= c;
    return r;
}

std::vector<double> matvec(const DenseMatrix& m, std::span<const double> x) {
    require(m.cols == x.size(), "matvec: dimension mismatch");
    std::vector<double> y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) acc += m.at(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

double frobenius_norm(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

double max_abs(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s = std::max(s, std::abs(v));
    return s;
}

// ===== Vector helpers =====

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch");
    require(!a.empty(), "cosine_similarity: empty input");
    const double na = norm2(a);
    const double nb = norm2(b);
    require(na > 0.0 && nb > 0.0, "cosine_similarity: zero-norm input");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

// ===== ProbVector =====

void ProbVector::validate() const {
    require(!probs.empty(), "ProbVector: empty");
    double sum = 0.0;
    for (double p : probs) {
        require(std::isfinite(p), "ProbVector: non-finite entry");
        require(p >= 0.0, "ProbVector: negative entry");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "ProbVector: entries sum to " + std::to_string(sum));
}

ProbVector softmax_temp(std::span<const double> logits, double temperature) {
    require(!logits.empty(), "softmax_temp: empty logits");
    require(std::isfinite(temperature) && temperature > 0.0, "softmax_temp: temperature must be > 0");
    double zmax = logits[0];
    for (double z : logits) {
        require(std::isfinite(z), "softmax_temp: non-finite logit");
        zmax = std::max(zmax, z);
    }
    ProbVector out;
    out.probs.resize(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp((logits[i] - zmax) / temperature);
        out.probs[i] = e;
        sum += e;
    }
    for (double& p : out.probs) p /= sum;
    return out;
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
    p.validate();
    q.validate();
    require(p.size() == q.size(), "kl_divergence: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p.probs[i];
        if (pi <= 0.0) continue;
        kl += pi * std::log(std::max(pi, kProbFloor) / std::max(q.probs[i], kProbFloor));
    }
    if (kl < 0.0 && kl > -1e-9) kl = 0.0;  // floor residue only; true value is >= 0
    return kl;
}

double entropy(const ProbVector& p) {
    p.validate();
    double h = 0.0;
    for (double pi : p.probs) {
        if (pi <= 0.0) continue;
        h -= pi * std::log(std::max(pi, kProbFloor));
    }
    return std::max(h, 0.0);
}

// ===== SVD (one-sided Jacobi) =====

namespace {

// Columns of a row-major matrix, gathered/scattered as contiguous vectors.
std::vector<double> get_col(const DenseMatrix& m, std::size_t j) {
    std::vector<double> c(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) c[i] = m.at(i, j);
    return c;
}

// Appends an orthonormal column for a null direction: first standard basis
// vector whose residual against existing columns stays well conditioned.
void fill_null_column(DenseMatrix& u, std::size_t j, std::size_t filled_upto) {
    const std::size_t m = u.rows;
    for (std::size_t cand = 0; cand < m; ++cand) {
        std::vector<double> r(m, 0.0);
        r[cand] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < filled_upto; ++k) {
                if (k == j) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < m; ++i) proj += r[i] * u.at(i, k);
                for (std::size_t i = 0; i < m; ++i) r[i] -= proj * u.at(i, k);
            }
        }
        const double rn = norm2(r);
        if (rn > 0.5) {
            for (std::size_t i = 0; i < m; ++i) u.at(i, j) = r[i] / rn;
            return;
        }
    }
    throw std::runtime_error("svd_thin: failed to complete orthonormal basis");
}

}  // namespace

SvdResult svd_thin(const DenseMatrix& m_in) {
    require(!m_in.empty(), "svd_thin: empty matrix");
    m_in.check_finite("svd_thin");

    const bool transposed = m_in.rows < m_in.cols;
    DenseMatrix a = transposed ? transpose(m_in) : m_in;
    const std::size_t nr = a.rows;
    const std::size_t nc = a.cols;

    DenseMatrix v = identity(nc);
    const double tol = 1e-14;

    bool converged = false;
    int sweeps = 0;
    double worst = 0.0;
    for (; sweeps < kSvdMaxSweeps; ++sweeps) {
        converged = true;
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < nc; ++p) {
            for (std::size_t q = p + 1; q < nc; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < nr; ++i) {
                    const double x = a.at(i, p);
                    const double y = a.at(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                const double denom = std::sqrt(app * aqq);
                if (denom == 0.0 || std::abs(apq) <= tol * denom) continue;
                worst = std::max(worst, std::abs(apq) / denom);
                converged = false;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < nr; ++i) {
                    const double x = a.at(i, p);
                    const double y = a.at(i, q);
                    a.at(i, p) = c * x - s * y;
                    a.at(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < nc; ++i) {
                    const double x = v.at(i, p);
                    const double y = v.at(i, q);
                    v.at(i, p) = c * x - s * y;
                    v.at(i, q) = s * x + c * y;
                }
            }
        }
        if (converged) break;
    }
    if (!converged) {
        throw std::runtime_error("svd_thin: no convergence after " + std::to_string(kSvdMaxSweeps) +
                                 " sweeps (worst off-diagonal ratio " + std::to_string(worst) + ")");
    }

    std::vector<double> sv(nc);
    DenseMatrix u(nr, nc);
    for (std::size_t j = 0; j < nc; ++j) {
        auto col = get_col(a, j);
        sv[j] = norm2(col);
    }

    // Descending singular values, index-stable for ties.
    std::vector<std::size_t> order(nc);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

    SvdResult res;
    res.singular.resize(nc);
    res.u = DenseMatrix(nr, nc);
    res.v = DenseMatrix(nc, nc);
    const double smax = sv.empty() ? 0.0 : sv[order[0]];
    const double null_tol = std::max(smax, 1.0) * 1e-14 * static_cast<double>(std::max(nr, nc));
    std::size_t col_out = 0;
    for (std::size_t j : order) {
        res.singular[col_out] = sv[j];
        for (std::size_t i = 0; i < nc; ++i) res.v.at(i, col_out) = v.at(i, j);
        if (sv[j] > null_tol) {
            for (std::size_t i = 0; i < nr; ++i) res.u.at(i, col_out) = a.at(i, j) / sv[j];
        }
        ++col_out;
    }
    for (std::size_t j = 0; j < nc; ++j) {
        if (res.singular[j] <= null_tol) {
            res.singular[j] = std::max(res.singular[j], 0.0);
            fill_null_column(res.u, j, nc);
        }
    }

    if (transposed) std::swap(res.u, res.v);
    return res;
}

// ===== Symmetric eigendecomposition (cyclic Jacobi) =====

SymEigResult sym_eig(const DenseMatrix& m_in) {
    require(!m_in.empty() && m_in.rows == m_in.cols, "sym_eig: matrix must be square");
    m_in.check_finite("sym_eig");
    const std::size_t n = m_in.rows;
    const double scale_ref = std::max(max_abs(m_in), 1e-300);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            require(std::abs(m_in.at(i, j) - m_in.at(j, i)) <= 1e-9 * scale_ref,
                    "sym_eig: matrix is not symmetric");

    DenseMatrix a = m_in;
    // Symmetrize exactly so rotations stay consistent.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a.at(i, j) + a.at(j, i));
            a.at(i, j) = v;
            a.at(j, i) = v;
        }
    DenseMatrix q = identity(n);

    const int max_sweeps = 100;
    const double tol = 1e-14;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
        if (std::sqrt(off) <= tol * scale_ref * static_cast<double>(n)) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                const double apq = a.at(p, r);
                if (std::abs(apq) <= tol * scale_ref) continue;
                const double app = a.at(p, p);
                const double aqq = a.at(r, r);
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, r);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, r) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a.at(p, k);
                    const double aqk = a.at(r, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(r, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = q.at(k, p);
                    const double qkq = q.at(k, r);
                    q.at(k, p) = c * qkp - s * qkq;
                    q.at(k, r) = s * qkp + c * qkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a.at(x, x) < a.at(y, y); });
    SymEigResult res;
    res.values.resize(n);
    res.vectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        res.values[j] = a.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) res.vectors.at(i, j) = q.at(i, order[j]);
    }
    return res;
}

// ===== Cholesky =====

DenseMatrix cholesky(const DenseMatrix& m) {
    require(!m.empty() && m.rows == m.cols, "cholesky: matrix must be square");
    const std::size_t n = m.rows;
    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s))
                    throw std::runtime_error("cholesky: matrix not positive definite (pivot " +
                                             std::to_string(s) + " at " + std::to_string(i) + ")");
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return l;
}

std::vector<double> cholesky_solve(const DenseMatrix& a, std::span<const double> rhs) {
    require(a.rows == rhs.size(), "cholesky_solve: dimension mismatch");
    const DenseMatrix l = cholesky(a);
    const std::size_t n = a.rows;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y[k];
        y[i] = s / l.at(i, i);
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l.at(k, ii) * x[k];
        x[ii] = s / l.at(ii, ii);
    }
    return x;
}

DenseMatrix inverse_sqrt_spd(const DenseMatrix& m, double eigen_floor, bool* floored) {
    const SymEigResult eig = sym_eig(m);
    const std::size_t n = m.rows;
    bool lifted = false;
    DenseMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double ev = eig.values[i];
        if (ev < eigen_floor) {
            ev = eigen_floor;
            lifted = true;
        }
        d.at(i, i) = 1.0 / std::sqrt(ev);
    }
    if (floored) *floored = lifted;
    return matmul(matmul(eig.vectors, d), transpose(eig.vectors));
}

}  // namespace tvc::linalg
