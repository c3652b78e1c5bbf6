#pragma once

#include "fdtinfer/response.hpp"

#include <optional>
#include <string>
#include <vector>

namespace fdtinfer {

/// Order-m time-domain kernel
///   g_m(t) = (I 0 ... 0) e^{tG} (alpha_1; ...; alpha_m)
/// with the block companion
///   G = [beta_1 I 0 ...; beta_2 0 I ...; ...; beta_m 0 ... 0].
/// Equivalent to an [m/m] rational function of 1/s in the Laplace domain.
/// g satisfies g^(m) = sum_i beta_i g^(m-i), so derivatives at 0 obey the
/// block Hankel recurrence used by the Pade matching.
struct RationalApproximant {
    int m = 0;
    int q = 0;
    std::vector<Matrix> alphas;  // m blocks, q x q
    std::vector<Matrix> betas;   // m blocks, q x q

    RationalApproximant() = default;
    RationalApproximant(std::vector<Matrix> a, std::vector<Matrix> b);

    Matrix companion() const;    // mq x mq
    Matrix alpha_stack() const;  // mq x q

    /// g_m^(order)(t) = E1^T G^order e^{tG} alpha_stack (exact derivatives,
    /// no finite differences). Guards ||tG||_inf <= 500 against overflow.
    Matrix eval(double t, int derivative_order = 0) const;

    /// Largest real part over eigenvalues of G (< 0 means a decaying kernel).
    double stability_margin() const;
};

/// Determine g_m from M_0..M_{2m-1} at t=0 (standard Pade matching).
/// The betas solve the block Hankel system
///   sum_{i=1..m} beta_i M_{m+j-i} = M_{m+j},  j = 0..m-1,
/// then alpha_{k+1} = M_k - sum_{i<=k} beta_i M_{k-i}. For m=1 this is
/// alpha_1 = M_0, beta_1 = M_1 M_0^{-1}. A singular system raises
/// DegenerateSystemError naming the offending block minor.
RationalApproximant pade_match_at_zero(const std::vector<Matrix>& moments);

/// EssentialStats-facing wrapper: reads M_i = entries (order i, t=0).
RationalApproximant pade_match_at_zero(const EssentialStats& stats, int m);

struct FitReport {
    double objective = 0.0;    // sum of squared residual entries
    double rms = 0.0;          // per-sample root mean square residual
    int iterations = 0;
    bool converged = false;
    bool stable = true;               // eigenvalues of G in the left half-plane
    double stability_margin = 0.0;
    double lag0_zscore = 0.0;         // |g(0) - curve(0)| / stderr(0), 0 if no stderr
    bool lag0_within_2se = true;
    std::vector<double> trace;        // accepted objective values (non-increasing)
    std::vector<double> grid;
    std::string init_policy;
    std::string message;
};

struct FitOptions {
    std::optional<RationalApproximant> init;
    std::vector<double> weights;  // per grid point; empty = unweighted
    int max_iterations = 600;
    /// Extra diagonal-rate multi-start spreads tried when no init is given.
    std::vector<double> rate_scales = {1.0, 0.3, 3.0};
};

/// Fit g_m to a square-valued response curve by damped least squares over
/// (alpha_i, beta_i). Initialization: the caller's approximant when given;
/// otherwise Pade matching from finite differences when the grid prefix is
/// uniform, plus diagonal log-spaced decay-rate starts spanning the curve's
/// observed decay (and, for scalar curves, a damped-oscillator start from
/// the first sign change). The best local minimum is returned; failure to
/// converge is reported, never silent.
std::pair<RationalApproximant, FitReport> least_squares_fit(
    const ResponseCurve& curve, int m, const FitOptions& opts = {});

/// Package g^(i)(t_j) values as essential statistics (method "rational-fit");
/// orders >= 2 carry a low-confidence note.
EssentialStats derivative_statistics(const RationalApproximant& g,
                                     const std::vector<double>& anchors,
                                     const std::vector<int>& orders);

/// The fitting grid used in the experiments: n points on [0, t_max],
/// geometric below t_split and uniform beyond, snapped to multiples of
/// dt_eff (deduplicated, so the result may hold slightly fewer points).
std::vector<double> make_fit_grid(double t_max, int n_points, double t_split,
                                  double dt_eff);

}  // namespace fdtinfer
