#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace fdtinfer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense matrix exponential (scaling-and-squaring with a Pade core).
Matrix expm(const Matrix& a);

/// Solve C S + S C^T + Q = 0 for symmetric S by Kronecker vectorization.
/// Throws DegenerateSystemError when the spectrum of C is resonant
/// (some eigenvalue pair sums to zero).
Matrix lyapunov_solve(const Matrix& c, const Matrix& q);

struct SymSkewParts {
    Matrix skew;  // (M - M^T)/2
    Matrix sym;   // (M + M^T)/2
};
SymSkewParts sym_skew_split(const Matrix& m);

/// Symmetric spectral square root of an SPD matrix. Eigenvalues below
/// -tol * max(1, lambda_max) raise DegenerateSystemError; small negative
/// values inside the tolerance are clamped to zero.
Matrix spd_sqrt(const Matrix& m, double tol = 1e-12);

/// Like spd_sqrt but floors negative eigenvalues at zero instead of
/// throwing; `floored` reports whether any eigenvalue below -tol was hit.
Matrix psd_sqrt_floor(const Matrix& m, double tol, bool& floored);

bool is_spd(const Matrix& m);

/// Largest real part over the eigenvalues of a (stability margin).
double spectral_abscissa(const Matrix& a);

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

struct LeastSquaresOptions {
    int max_iterations = 200;
    double gradient_tol = 1e-12;
    double step_tol = 1e-14;
    double initial_damping = 1e-3;
};

struct LeastSquaresResult {
    Vector x;
    double objective = 0.0;            // squared residual norm at x
    std::vector<double> trace;         // objective after each accepted step
    int iterations = 0;
    bool converged = false;
};

/// Jacobian by forward differences with step sqrt(eps) * (1 + |x_i|).
Matrix forward_difference_jacobian(const ResidualFn& f, const Vector& x,
                                   const Vector& f_of_x);

/// Levenberg-Marquardt iteration with adaptive damping. The accepted
/// objective trace is non-increasing; on failure to converge the best
/// iterate is returned with converged=false.
LeastSquaresResult damped_least_squares(const ResidualFn& f, const Vector& init,
                                        const LeastSquaresOptions& opts = {},
                                        const JacobianFn& jac = nullptr);

/// Bisection on [lo, hi] down to |hi - lo| <= tol. Requires a sign change;
/// throws BracketError otherwise.
double bracketed_root(const std::function<double(double)>& f, double lo,
                      double hi, double tol);

}  // namespace fdtinfer
