#pragma once

#include "fdtinfer/models.hpp"
#include "fdtinfer/simulate.hpp"

#include <string>
#include <vector>

namespace fdtinfer {

/// Estimated response operator k_A on a lag grid. values[j] is the q x n
/// matrix E[A(x(t_j)) (x) B(x(0))] with q the observable output dimension.
struct ResponseCurve {
    std::vector<double> times;
    std::vector<Matrix> values;
    std::vector<Matrix> stderrs;  // batch-means standard errors, same shapes
    long n_samples = 0;

    int q() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
    int n() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }
    std::size_t size() const { return times.size(); }

    /// Index of an anchor time on the grid (relative tolerance 1e-9).
    std::size_t index_of(double t) const;

    /// Scalar sub-curve of one entry (row r, column c).
    ResponseCurve entry_curve(int r, int c) const;

    void validate() const;
};

struct EssentialStatEntry {
    int order = 0;
    double time = 0.0;
    Matrix value;
    Matrix stderr_est;   // may be empty when no error estimate applies
    std::string method;  // "analytic" | "finite-difference" | "rational-fit"
    std::string note;
};

/// Ordered set of response-derivative statistics {(i, t_j, value)}.
struct EssentialStats {
    std::vector<EssentialStatEntry> entries;
    std::string provenance;

    void add(EssentialStatEntry entry);  // rejects duplicate (order, time)
    const EssentialStatEntry* find(int order, double time) const;
};

/// The conjugate-variable map B(x) = W x for constant forcing: W = S^{-1}
/// for the linear family, I / sigma_eq^2 for the triad, diag(0, 1/kBT) for
/// Langevin with c = (0, 1). The data-generating equilibrium is assumed
/// known, so W is built from the true model.
Matrix conjugate_matrix(const ModelSpec& data_model);

Vector conjugate_variable(const ModelSpec& data_model, const Vector& state);

struct ResponseConfig {
    int n_batches = 50;   // non-overlapping batch means across pair indices
    long min_pairs = 10000;
};

/// Time-average estimator over all N-j pairs at lag j:
///   k_A(t_j) ~= (1/(N-j)) sum_i A(x_{i+j}) (x) B(x_i).
/// Lags must be integer multiples of dt_effective. Per-entry standard
/// errors come from non-overlapping batch means. Multi-chain input is
/// merged in chain-index order with no cross-chain pairs.
ResponseCurve estimate_response(const std::vector<Trajectory>& chains,
                                const Observable& observable,
                                const ModelSpec& data_model,
                                const std::vector<double>& lags,
                                const ResponseConfig& cfg = {});

ResponseCurve estimate_response(const Trajectory& traj, const Observable& observable,
                                const ModelSpec& data_model,
                                const std::vector<double>& lags,
                                const ResponseConfig& cfg = {});

/// Finite-difference derivative of the curve at an anchor on the grid.
/// Orders 1..3; one-sided stencils at t=0 (4-point for order 1), centered
/// stencils in the interior. The stderr_est of the returned entry combines
/// a doubled-spacing Richardson difference with propagated curve noise.
EssentialStatEntry finite_difference_derivative(const ResponseCurve& curve,
                                                int order, double anchor);

/// Monte Carlo equilibrium moments of a Langevin trajectory under the
/// candidate model's potential, with batch-means standard errors.
LangevinEqMoments equilibrium_moments(const std::vector<Trajectory>& chains,
                                      const LangevinModel& candidate,
                                      int n_batches = 50);

LangevinEqMoments equilibrium_moments(const Trajectory& traj,
                                      const LangevinModel& candidate,
                                      int n_batches = 50);

}  // namespace fdtinfer
