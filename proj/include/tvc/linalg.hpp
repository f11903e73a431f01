#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tvc::linalg {

// Probability floor used inside kl_divergence / entropy so log(0) never fires.
inline constexpr double kProbFloor = 1e-12;

// ===== DenseMatrix =====

// Row-major dense matrix of doubles. Small sizes only (per-layer weight
// blocks, Gram/Hessian matrices); nothing here is tuned for large inputs.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    DenseMatrix(std::size_t r, std::size_t c, std::vector<double> d);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool empty() const { return rows == 0 || cols == 0; }
    // Throws std::invalid_argument on non-finite entries.
    void check_finite(const std::string& what) const;
};

DenseMatrix identity(std::size_t n);
DenseMatrix transpose(const DenseMatrix& m);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& m, double c);
std::vector<double> matvec(const DenseMatrix& m, std::span<const double> x);
double frobenius_norm(const DenseMatrix& m);
double max_abs(const DenseMatrix& m);

// ===== Vector helpers =====

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Cosine similarity of two same-length vectors. Throws std::invalid_argument
// on length mismatch or when either vector has zero norm. Result is clamped
// to [-1, 1] to absorb rounding.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// ===== ProbVector =====

// A point on the probability simplex. validate() enforces the contract;
// softmax_temp output always satisfies it by construction.
struct ProbVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    // Throws std::invalid_argument if entries are negative/non-finite or the
    // sum strays from 1 by more than 1e-9.
    void validate() const;
};

// Temperature softmax with max-shift; stable for |z| up to at least 1e4.
// T must be > 0 (std::invalid_argument otherwise).
ProbVector softmax_temp(std::span<const double> logits, double temperature);

// KL(p || q) in nats with the kProbFloor guard on both arguments. Terms with
// p_i == 0 contribute zero. The floor can introduce a negative residue on the
// order of n*kProbFloor; residues above -1e-9 are truncated to zero since the
// true divergence is nonnegative.
double kl_divergence(const ProbVector& p, const ProbVector& q);

// Shannon entropy in nats, same floor handling as kl_divergence.
double entropy(const ProbVector& p);

// ===== Decompositions =====

struct SvdResult {
    DenseMatrix u;                  // rows x k, orthonormal columns
    std::vector<double> singular;   // k values, descending
    DenseMatrix v;                  // cols x k, orthonormal columns
};

// Thin SVD (k = min(rows, cols)) by one-sided Jacobi rotations, at most
// kSvdMaxSweeps sweeps. Deterministic for a fixed input. Throws
// std::invalid_argument on empty/non-finite input and std::runtime_error
// with sweep diagnostics if convergence is not reached.
inline constexpr int kSvdMaxSweeps = 200;
SvdResult svd_thin(const DenseMatrix& m);

struct SymEigResult {
    std::vector<double> values;   // ascending
    DenseMatrix vectors;          // column j pairs with values[j]
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Symmetry is enforced up to 1e-9 * max_abs (std::invalid_argument beyond).
SymEigResult sym_eig(const DenseMatrix& m);

// Cholesky factor L (lower) of an SPD matrix; std::runtime_error when a
// pivot collapses (matrix not positive definite to working precision).
DenseMatrix cholesky(const DenseMatrix& m);

// Solves A x = rhs for SPD A via Cholesky.
std::vector<double> cholesky_solve(const DenseMatrix& a, std::span<const double> rhs);

// Inverse square root of an SPD matrix through sym_eig. Eigenvalues below
// `eigen_floor` are lifted to it; `floored` (optional) reports whether the
// lift fired so callers can warn.
DenseMatrix inverse_sqrt_spd(const DenseMatrix& m, double eigen_floor, bool* floored = nullptr);

}  // namespace tvc::linalg
