#include "fdtinfer/rational.hpp"

#include "fdtinfer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace fdtinfer {

RationalApproximant::RationalApproximant(std::vector<Matrix> a, std::vector<Matrix> b)
    : m(static_cast<int>(a.size())), alphas(std::move(a)), betas(std::move(b)) {
    if (m < 1 || static_cast<int>(betas.size()) != m) {
        throw std::invalid_argument("RationalApproximant: need m >= 1 alpha and beta blocks");
    }
    q = static_cast<int>(alphas.front().rows());
    for (const auto& blk : alphas) {
        if (blk.rows() != q || blk.cols() != q) {
            throw std::invalid_argument("RationalApproximant: alpha blocks must be square, same size");
        }
    }
    for (const auto& blk : betas) {
        if (blk.rows() != q || blk.cols() != q) {
            throw std::invalid_argument("RationalApproximant: beta blocks must be square, same size");
        }
    }
}

Matrix RationalApproximant::companion() const {
    Matrix g = Matrix::Zero(m * q, m * q);
    for (int i = 0; i < m; ++i) {
        g.block(i * q, 0, q, q) = betas[i];
        if (i + 1 < m) g.block(i * q, (i + 1) * q, q, q) = Matrix::Identity(q, q);
    }
    return g;
}

Matrix RationalApproximant::alpha_stack() const {
    Matrix a(m * q, q);
    for (int i = 0; i < m; ++i) a.block(i * q, 0, q, q) = alphas[i];
    return a;
}

Matrix RationalApproximant::eval(double t, int derivative_order) const {
    if (t < 0.0) throw std::invalid_argument("RationalApproximant::eval: t must be >= 0");
    if (derivative_order < 0) throw std::invalid_argument("eval: derivative order must be >= 0");
    const Matrix g = companion();
    if (t * g.cwiseAbs().rowwise().sum().maxCoeff() > 500.0) {
        throw DegenerateSystemError("RationalApproximant::eval: ||tG|| exceeds the overflow bound 500");
    }
    Matrix v = expm(t * g) * alpha_stack();
    for (int k = 0; k < derivative_order; ++k) v = g * v;
    return v.topRows(q);
}

double RationalApproximant::stability_margin() const {
    return spectral_abscissa(companion());
}

RationalApproximant pade_match_at_zero(const std::vector<Matrix>& moments) {
    if (moments.empty() || moments.size() % 2 != 0) {
        throw std::invalid_argument("pade_match_at_zero: need M_0..M_{2m-1} (an even count)");
    }
    const int m = static_cast<int>(moments.size()) / 2;
    const int q = static_cast<int>(moments.front().rows());
    for (const Matrix& blk : moments) {
        if (blk.rows() != q || blk.cols() != q) {
            throw std::invalid_argument("pade_match_at_zero: all M_i must be square, same size");
        }
    }

    std::vector<Matrix> betas(m, Matrix::Zero(q, q));
    if (m == 1) {
        Eigen::FullPivLU<Matrix> lu(moments[0].transpose());
        if (!lu.isInvertible()) {
            throw DegenerateSystemError("pade_match_at_zero: M_0 is singular");
        }
        // beta_1 = M_1 M_0^{-1}, via M_0^T beta_1^T = M_1^T
        betas[0] = lu.solve(moments[1].transpose()).transpose();
    } else {
        // [beta_1 .. beta_m] H = [M_m .. M_{2m-1}],  H block (i,j) = M_{m+j-i-1+1}
        Matrix h(m * q, m * q);
        for (int i = 1; i <= m; ++i) {
            for (int j = 0; j < m; ++j) {
                h.block((i - 1) * q, j * q, q, q) = moments[m + j - i];
            }
        }
        Matrix rhs(q, m * q);
        for (int j = 0; j < m; ++j) rhs.block(0, j * q, q, q) = moments[m + j];
        Eigen::FullPivLU<Matrix> lu(h.transpose());
        if (!lu.isInvertible()) {
            throw DegenerateSystemError(
                "pade_match_at_zero: block Hankel system singular (rank " +
                std::to_string(lu.rank()) + " of " + std::to_string(m * q) + ")");
        }
        Matrix bt = lu.solve(rhs.transpose());  // (mq) x q
        for (int i = 0; i < m; ++i) betas[i] = bt.middleRows(i * q, q).transpose();
    }

    std::vector<Matrix> alphas(m, Matrix::Zero(q, q));
    alphas[0] = moments[0];
    for (int k = 1; k < m; ++k) {
        Matrix a = moments[k];
        for (int i = 1; i <= k; ++i) a -= betas[i - 1] * moments[k - i];
        alphas[k] = a;
    }

    RationalApproximant g(alphas, betas);
    for (int i = 0; i < 2 * m; ++i) {
        const double scale = 1.0 + moments[i].norm();
        if ((g.eval(0.0, i) - moments[i]).norm() > 1e-6 * scale) {
            throw DegenerateSystemError(
                "pade_match_at_zero: matching post-condition violated at order " +
                std::to_string(i) + " (ill-conditioned system)");
        }
    }
    return g;
}

RationalApproximant pade_match_at_zero(const EssentialStats& stats, int m) {
    if (m < 1) throw std::invalid_argument("pade_match_at_zero: m must be >= 1");
    std::vector<Matrix> moments;
    for (int i = 0; i < 2 * m; ++i) {
        const EssentialStatEntry* e = stats.find(i, 0.0);
        if (e == nullptr) {
            throw std::invalid_argument("pade_match_at_zero: missing M_" + std::to_string(i) +
                                        " at t = 0 in the essential statistics");
        }
        moments.push_back(e->value);
    }
    return pade_match_at_zero(moments);
}

std::vector<double> make_fit_grid(double t_max, int n_points, double t_split,
                                  double dt_eff) {
    if (!(t_max > 0) || n_points < 3 || !(t_split > 0) || !(dt_eff > 0)) {
        throw std::invalid_argument("make_fit_grid: bad arguments");
    }
    t_split = std::min(t_split, 0.5 * t_max);
    const int n_geo = n_points / 2;        // including the leading 0
    const int n_lin = n_points - n_geo;
    std::set<long> steps;
    steps.insert(0);
    const double t_min = std::max(dt_eff, t_split * 1e-3);
    for (int i = 0; i < n_geo - 1; ++i) {
        const double f = (n_geo > 2) ? static_cast<double>(i) / (n_geo - 2) : 1.0;
        const double t = t_min * std::pow(t_split / t_min, f);
        steps.insert(std::lround(t / dt_eff));
    }
    for (int i = 1; i <= n_lin; ++i) {
        const double t = t_split + (t_max - t_split) * i / static_cast<double>(n_lin);
        steps.insert(std::lround(t / dt_eff));
    }
    std::vector<double> grid;
    grid.reserve(steps.size());
    for (long s : steps) grid.push_back(s * dt_eff);
    return grid;
}

namespace {

Vector pack(const RationalApproximant& g) {
    const int q2 = g.q * g.q;
    Vector x(2 * g.m * q2);
    long at = 0;
    for (const Matrix& blk : g.alphas)
        for (int r = 0; r < g.q; ++r)
            for (int c = 0; c < g.q; ++c) x(at++) = blk(r, c);
    for (const Matrix& blk : g.betas)
        for (int r = 0; r < g.q; ++r)
            for (int c = 0; c < g.q; ++c) x(at++) = blk(r, c);
    return x;
}

RationalApproximant unpack(const Vector& x, int m, int q) {
    std::vector<Matrix> alphas(m, Matrix(q, q)), betas(m, Matrix(q, q));
    long at = 0;
    for (int i = 0; i < m; ++i)
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < q; ++c) alphas[i](r, c) = x(at++);
    for (int i = 0; i < m; ++i)
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < q; ++c) betas[i](r, c) = x(at++);
    return RationalApproximant(std::move(alphas), std::move(betas));
}

// beta blocks of a diagonal-rate kernel: expand prod_j (s + rate_j) and use
// s^m - beta_1 s^{m-1} - ... - beta_m = poly(s).
std::vector<Matrix> betas_from_rates(const std::vector<double>& rates, int q) {
    std::vector<double> poly{1.0};  // monic coefficients, descending powers
    for (double r : rates) {
        std::vector<double> next(poly.size() + 1, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] += poly[i] * r;
        }
        poly = next;
    }
    const int m = static_cast<int>(rates.size());
    std::vector<Matrix> betas(m);
    for (int i = 1; i <= m; ++i) betas[i - 1] = -poly[i] * Matrix::Identity(q, q);
    return betas;
}

// Complex-pair variant: (s^2 + 2 zeta w s + w^2) prod (s + rate_j).
std::vector<Matrix> betas_from_oscillator(double omega, double zeta,
                                          const std::vector<double>& extra_rates, int q) {
    std::vector<double> poly{1.0, 2.0 * zeta * omega, omega * omega};
    for (double r : extra_rates) {
        std::vector<double> next(poly.size() + 1, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] += poly[i] * r;
        }
        poly = next;
    }
    const int m = static_cast<int>(poly.size()) - 1;
    std::vector<Matrix> betas(m);
    for (int i = 1; i <= m; ++i) betas[i - 1] = -poly[i] * Matrix::Identity(q, q);
    return betas;
}

// Forward-difference estimates of M_0..M_{2m-1} on a uniform grid prefix;
// initialization quality only.
std::vector<Matrix> forward_difference_moments(const ResponseCurve& curve, int m,
                                               double h) {
    const int q = curve.q();
    std::vector<Matrix> table;
    for (int i = 0; i < 2 * m + 1; ++i) table.push_back(curve.values[i]);
    std::vector<Matrix> moments;
    double hp = 1.0;
    for (int i = 0; i < 2 * m; ++i) {
        moments.push_back(table.front() / hp);
        for (std::size_t k = 0; k + 1 < table.size(); ++k) table[k] = table[k + 1] - table[k];
        table.pop_back();
        hp *= h;
        (void)q;
    }
    return moments;
}

bool uniform_prefix(const ResponseCurve& curve, int count, double* h_out) {
    if (static_cast<int>(curve.size()) < count || count < 2) return false;
    const double h = curve.times[1] - curve.times[0];
    for (int i = 1; i < count; ++i) {
        if (std::abs(curve.times[i] - curve.times[i - 1] - h) > 1e-9 * std::max(1.0, h)) {
            return false;
        }
    }
    *h_out = h;
    return true;
}

}  // namespace

std::pair<RationalApproximant, FitReport> least_squares_fit(
    const ResponseCurve& curve, int m, const FitOptions& opts) {
    curve.validate();
    if (m < 1) throw std::invalid_argument("least_squares_fit: m must be >= 1");
    const int q = curve.q();
    if (q != curve.n()) {
        throw std::invalid_argument("least_squares_fit: curve values must be square blocks");
    }
    const int n_pts = static_cast<int>(curve.size());
    const int n_params = 2 * m * q * q;
    if (n_pts < n_params + 1) {
        throw std::invalid_argument("least_squares_fit: need at least 2 m q^2 + 1 grid points");
    }
    if (curve.times.back() <= 0.0) {
        throw std::invalid_argument("least_squares_fit: need points beyond t = 0");
    }
    if (!opts.weights.empty() && opts.weights.size() != curve.size()) {
        throw std::invalid_argument("least_squares_fit: weights size mismatch");
    }

    ResidualFn residual = [&](const Vector& x) -> Vector {
        Vector r(n_pts * q * q);
        RationalApproximant g = unpack(x, m, q);
        for (int i = 0; i < n_pts; ++i) {
            const double w = opts.weights.empty() ? 1.0 : opts.weights[i];
            Matrix diff;
            try {
                diff = curve.values[i] - g.eval(curve.times[i]);
            } catch (const std::exception&) {
                diff = Matrix::Constant(q, q, 1e8);  // overflow penalty
            }
            for (int rr = 0; rr < q; ++rr)
                for (int cc = 0; cc < q; ++cc) r(i * q * q + rr * q + cc) = w * diff(rr, cc);
        }
        return r;
    };

    // Candidate initializations.
    struct Candidate {
        RationalApproximant g;
        std::string policy;
    };
    std::vector<Candidate> candidates;
    if (opts.init) {
        if (opts.init->m != m || opts.init->q != q) {
            throw std::invalid_argument("least_squares_fit: init has wrong order or block size");
        }
        candidates.push_back({*opts.init, "user"});
    } else {
        double h = 0.0;
        if (uniform_prefix(curve, 2 * m + 1, &h)) {
            try {
                candidates.push_back(
                    {pade_match_at_zero(forward_difference_moments(curve, m, h)),
                     "pade-from-finite-differences"});
            } catch (const std::exception&) {
                // singular or wildly noisy prefix: fall through to rate starts
            }
        }

        // Decay-rate estimate from the first e-folding of the norm.
        const double norm0 = std::max(curve.values.front().norm(), 1e-300);
        double t_fold = curve.times.back() * 0.3;
        for (int i = 1; i < n_pts; ++i) {
            if (curve.values[i].norm() < norm0 / 2.718281828459045) {
                t_fold = std::max(curve.times[i], 1e-12);
                break;
            }
        }
        const double rho = 1.0 / t_fold;
        Matrix a1 = curve.values.front();
        for (double scale : opts.rate_scales) {
            std::vector<double> rates(m);
            for (int j = 0; j < m; ++j) {
                const double f = (m > 1) ? static_cast<double>(j) / (m - 1) : 0.5;
                rates[j] = scale * rho * std::pow(9.0, f - 0.5);
            }
            std::vector<Matrix> alphas(m, Matrix::Zero(q, q));
            alphas[0] = a1;
            candidates.push_back({RationalApproximant(alphas, betas_from_rates(rates, q)),
                                  "diagonal-rates x" + std::to_string(scale)});
        }
        if (q == 1 && m >= 2) {
            // first sign change of the scalar curve -> oscillator start
            double t_zero = 0.0;
            for (int i = 1; i < n_pts; ++i) {
                if (curve.values[i](0, 0) * curve.values.front()(0, 0) < 0.0) {
                    t_zero = curve.times[i];
                    break;
                }
            }
            if (t_zero > 0.0) {
                const double omega = 1.5707963267948966 / t_zero;
                std::vector<double> extra(m - 2);
                for (int j = 0; j < m - 2; ++j) extra[j] = rho * std::pow(3.0, j);
                std::vector<Matrix> alphas(m, Matrix::Zero(q, q));
                alphas[0] = a1;
                candidates.push_back(
                    {RationalApproximant(alphas, betas_from_oscillator(omega, 0.3, extra, q)),
                     "damped-oscillator"});
            }
        }
    }

    LeastSquaresOptions lm;
    lm.max_iterations = opts.max_iterations;
    LeastSquaresResult best;
    std::string best_policy;
    bool have_best = false;
    for (const Candidate& cand : candidates) {
        LeastSquaresResult r = damped_least_squares(residual, pack(cand.g), lm);
        if (!have_best || r.objective < best.objective) {
            best = std::move(r);
            best_policy = cand.policy;
            have_best = true;
        }
    }

    RationalApproximant fitted = unpack(best.x, m, q);
    FitReport report;
    report.objective = best.objective;
    report.rms = std::sqrt(best.objective / static_cast<double>(n_pts * q * q));
    report.iterations = best.iterations;
    report.converged = best.converged;
    report.trace = best.trace;
    report.grid = curve.times;
    report.init_policy = best_policy;
    report.stability_margin = fitted.stability_margin();
    report.stable = report.stability_margin < 0.0;
    if (!report.stable) {
        report.message += "unstable companion matrix (eigenvalue in the right half-plane); ";
    }
    if (!report.converged) {
        report.message += "not converged after " + std::to_string(best.iterations) + " iterations; ";
    }
    if (!curve.stderrs.empty()) {
        const Matrix diff = (fitted.eval(0.0) - curve.values.front()).cwiseAbs();
        double worst = 0.0;
        for (int r = 0; r < q; ++r) {
            for (int c = 0; c < q; ++c) {
                const double se = curve.stderrs.front()(r, c);
                if (se > 0.0) worst = std::max(worst, diff(r, c) / se);
            }
        }
        report.lag0_zscore = worst;
        report.lag0_within_2se = worst <= 2.0;
        if (!report.lag0_within_2se) {
            report.message += "g(0) deviates from the lag-0 estimate by more than 2 stderr; ";
        }
    }
    return {std::move(fitted), std::move(report)};
}

EssentialStats derivative_statistics(const RationalApproximant& g,
                                     const std::vector<double>& anchors,
                                     const std::vector<int>& orders) {
    EssentialStats stats;
    stats.provenance = "derivatives of a fitted order-" + std::to_string(g.m) + " approximant";
    for (double t : anchors) {
        for (int ord : orders) {
            EssentialStatEntry e;
            e.order = ord;
            e.time = t;
            e.value = g.eval(t, ord);
            e.method = "rational-fit";
            if (ord >= 2) {
                e.note = "low-confidence: order >= 2 derivative of a fitted kernel";
            }
            stats.add(std::move(e));
        }
    }
    return stats;
}

}  // namespace fdtinfer
