#include "fdtinfer/linalg.hpp"

#include "fdtinfer/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdtinfer {

Matrix expm(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("expm: matrix must be square");
    }
    if (!a.allFinite()) {
        throw std::invalid_argument("expm: non-finite entries");
    }
    Matrix r = a.exp();
    if (!r.allFinite()) {
        throw DegenerateSystemError("expm: overflow (norm too large)");
    }
    return r;
}

Matrix lyapunov_solve(const Matrix& c, const Matrix& q) {
    const Eigen::Index n = c.rows();
    if (c.cols() != n || q.rows() != n || q.cols() != n) {
        throw std::invalid_argument("lyapunov_solve: dimension mismatch");
    }
    // vec(CS + SC^T) = (I (x) C + C (x) I) vec(S), column-major vec
    Matrix k = Matrix::Zero(n * n, n * n);
    const Matrix id = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            k.block(i * n, j * n, n, n) += id(i, j) * c;  // I (x) C
            k.block(i * n, j * n, n, n) += c(i, j) * id;  // C (x) I
        }
    }
    Eigen::FullPivLU<Matrix> lu(k);
    if (!lu.isInvertible()) {
        throw DegenerateSystemError(
            "lyapunov_solve: resonant spectrum (Kronecker system singular)");
    }
    Vector rhs = Eigen::Map<const Vector>(q.data(), n * n);
    Vector s_vec = lu.solve(-rhs);
    Matrix s = Eigen::Map<Matrix>(s_vec.data(), n, n);
    return 0.5 * (s + s.transpose());
}

SymSkewParts sym_skew_split(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("sym_skew_split: matrix must be square");
    }
    return {0.5 * (m - m.transpose()), 0.5 * (m + m.transpose())};
}

namespace {

Matrix spectral_sqrt(const Matrix& m, double tol, bool throw_on_negative,
                     bool* floored) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("spd_sqrt: matrix must be square");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    Vector lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < 0.0) {
            if (throw_on_negative && lam(i) < -tol * scale) {
                throw DegenerateSystemError(
                    "spd_sqrt: matrix is not positive semidefinite");
            }
            if (floored && lam(i) < -tol * scale) *floored = true;
            lam(i) = 0.0;
        }
    }
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

}  // namespace

Matrix spd_sqrt(const Matrix& m, double tol) {
    return spectral_sqrt(m, tol, true, nullptr);
}

Matrix psd_sqrt_floor(const Matrix& m, double tol, bool& floored) {
    floored = false;
    return spectral_sqrt(m, tol, false, &floored);
}

bool is_spd(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    if (!m.isApprox(m.transpose(), 1e-12)) return false;
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
}

double spectral_abscissa(const Matrix& a) {
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

Matrix forward_difference_jacobian(const ResidualFn& f, const Vector& x,
                                   const Vector& f_of_x) {
    const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
    Matrix j(f_of_x.size(), x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = sqrt_eps * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        j.col(i) = (f(xp) - f_of_x) / h;
        xp(i) = x(i);
    }
    return j;
}

LeastSquaresResult damped_least_squares(const ResidualFn& f, const Vector& init,
                                        const LeastSquaresOptions& opts,
                                        const JacobianFn& jac) {
    LeastSquaresResult res;
    res.x = init;
    Vector r = f(init);
    res.objective = r.squaredNorm();
    res.trace.push_back(res.objective);

    double lambda = opts.initial_damping;
    for (res.iterations = 0; res.iterations < opts.max_iterations;
         ++res.iterations) {
        Matrix j = jac ? jac(res.x) : forward_difference_jacobian(f, res.x, r);
        Vector g = j.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <=
            opts.gradient_tol * (1.0 + res.objective)) {
            res.converged = true;
            return res;
        }
        Matrix jtj = j.transpose() * j;
        Vector d = jtj.diagonal().cwiseMax(1e-12);

        bool accepted = false;
        Vector step;
        auto attempt = [&](double lam) {
            Matrix m = jtj;
            m.diagonal() += lam * d;
            step = m.ldlt().solve(-g);
            if (!step.allFinite()) return false;
            Vector xn = res.x + step;
            Vector rn = f(xn);
            const double on = rn.squaredNorm();
            if (std::isfinite(on) && on < res.objective) {
                res.x = xn;
                r = rn;
                res.objective = on;
                res.trace.push_back(on);
                return true;
            }
            return false;
        };

        // undamped Gauss-Newton first, Marquardt damping as the fallback
        accepted = attempt(0.0);
        if (!accepted) {
            while (lambda < 1e14) {
                if (attempt(lambda)) {
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            return res;  // damping exhausted, best iterate kept
        }
        lambda = std::max(lambda / 3.0, 1e-14);
        const double prev = res.trace[res.trace.size() - 2];
        if (prev - res.objective <= 1e-14 * prev) {
            res.converged = true;  // at the attainable floor
            return res;
        }
        if (step.norm() <= opts.step_tol * (1.0 + res.x.norm())) {
            res.converged = true;
            return res;
        }
        if (res.objective <= 1e-300) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

double bracketed_root(const std::function<double(double)>& f, double lo,
                      double hi, double tol) {
    if (!(lo < hi)) throw std::invalid_argument("bracketed_root: lo >= hi");
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw BracketError("bracketed_root: no sign change on [lo, hi]");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // spacing limit
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace fdtinfer
