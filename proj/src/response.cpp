#include "fdtinfer/response.hpp"

#include "fdtinfer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdtinfer {

namespace {

bool close(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

std::size_t ResponseCurve::index_of(double t) const {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (close(times[i], t, 1e-9)) return i;
    }
    throw GridError("ResponseCurve: time " + std::to_string(t) + " is not on the grid");
}

ResponseCurve ResponseCurve::entry_curve(int r, int c) const {
    if (values.empty() || r < 0 || r >= q() || c < 0 || c >= n()) {
        throw std::invalid_argument("entry_curve: index out of range");
    }
    ResponseCurve out;
    out.times = times;
    out.n_samples = n_samples;
    out.values.reserve(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
        Matrix v(1, 1), s(1, 1);
        v(0, 0) = values[j](r, c);
        out.values.push_back(v);
        if (!stderrs.empty()) {
            s(0, 0) = stderrs[j](r, c);
            out.stderrs.push_back(s);
        }
    }
    return out;
}

void ResponseCurve::validate() const {
    if (times.size() != values.size()) {
        throw std::invalid_argument("ResponseCurve: times/values size mismatch");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw std::invalid_argument("ResponseCurve: times must be strictly increasing");
        }
    }
    for (const Matrix& v : values) {
        if (!v.allFinite()) throw std::invalid_argument("ResponseCurve: non-finite values");
    }
    if (n_samples <= 0) throw std::invalid_argument("ResponseCurve: n_samples must be positive");
}

void EssentialStats::add(EssentialStatEntry entry) {
    if (entry.order < 0) throw std::invalid_argument("EssentialStats: order must be >= 0");
    if (entry.time < 0.0) throw std::invalid_argument("EssentialStats: anchor time must be >= 0");
    if (find(entry.order, entry.time) != nullptr) {
        throw std::invalid_argument("EssentialStats: duplicate (order, time) entry");
    }
    entries.push_back(std::move(entry));
}

const EssentialStatEntry* EssentialStats::find(int order, double time) const {
    for (const auto& e : entries) {
        if (e.order == order && close(e.time, time, 1e-12)) return &e;
    }
    return nullptr;
}

Matrix conjugate_matrix(const ModelSpec& data_model) {
    if (data_model.is_linear()) {
        const Matrix s = data_model.linear().stationary_covariance();
        return s.ldlt().solve(Matrix::Identity(s.rows(), s.cols()));
    }
    if (data_model.is_triad()) {
        return Matrix::Identity(3, 3) / data_model.triad().sigma_eq_sq();
    }
    Matrix w = Matrix::Zero(2, 2);
    w(1, 1) = 1.0 / data_model.langevin().kBT;
    return w;
}

Vector conjugate_variable(const ModelSpec& data_model, const Vector& state) {
    if (state.size() != data_model.state_dim()) {
        throw std::invalid_argument("conjugate_variable: state dimension mismatch");
    }
    return conjugate_matrix(data_model) * state;
}

namespace {

long lag_index(double lag, double dt_eff) {
    const double ratio = lag / dt_eff;
    const long idx = static_cast<long>(std::llround(ratio));
    if (idx < 0 || std::abs(ratio - static_cast<double>(idx)) > 1e-6) {
        throw GridError("estimate_response: lag " + std::to_string(lag) +
                        " is not a multiple of dt_effective = " + std::to_string(dt_eff));
    }
    return idx;
}

// A(x) rows for every retained sample. For the linear observables this is
// just a column selection; QuadraticTriad is materialized.
Matrix observable_rows(const Observable& obs, const Matrix& states) {
    switch (obs.kind) {
        case ObservableKind::Identity:
            return states;
        case ObservableKind::Velocity: {
            Matrix a = Matrix::Zero(states.rows(), 2);
            a.col(1) = states.col(1);
            return a;
        }
        case ObservableKind::QuadraticTriad: {
            Matrix a(states.rows(), 3);
            a.col(0) = states.col(1).cwiseProduct(states.col(2));
            a.col(1) = states.col(0).cwiseProduct(states.col(2));
            a.col(2) = states.col(0).cwiseProduct(states.col(1));
            return a;
        }
    }
    throw std::invalid_argument("observable_rows: unknown kind");
}

}  // namespace

ResponseCurve estimate_response(const std::vector<Trajectory>& chains,
                                const Observable& observable,
                                const ModelSpec& data_model,
                                const std::vector<double>& lags,
                                const ResponseConfig& cfg) {
    if (chains.empty()) throw std::invalid_argument("estimate_response: no trajectories");
    observable.validate_for(data_model);
    const int n = data_model.state_dim();
    const int q = observable.output_dim(n);
    for (const Trajectory& t : chains) {
        if (t.dim() != n) throw std::invalid_argument("estimate_response: trajectory dimension mismatch");
        if (std::abs(t.dt_effective - chains.front().dt_effective) > 1e-12) {
            throw std::invalid_argument("estimate_response: chains disagree on dt_effective");
        }
    }
    if (lags.empty()) throw std::invalid_argument("estimate_response: empty lag grid");
    for (std::size_t i = 1; i < lags.size(); ++i) {
        if (!(lags[i] > lags[i - 1])) {
            throw std::invalid_argument("estimate_response: lags must be strictly increasing");
        }
    }

    const double dt_eff = chains.front().dt_effective;
    std::vector<long> idx(lags.size());
    for (std::size_t j = 0; j < lags.size(); ++j) idx[j] = lag_index(lags[j], dt_eff);

    long total_rows = 0;
    for (const Trajectory& t : chains) total_rows += t.rows();
    const long max_lag = *std::max_element(idx.begin(), idx.end());
    long pairs_at_max = 0;
    for (const Trajectory& t : chains) pairs_at_max += std::max<long>(0, t.rows() - max_lag);
    if (pairs_at_max < cfg.min_pairs) {
        throw SampleSizeError("estimate_response: only " + std::to_string(pairs_at_max) +
                              " pairs at the largest lag (need >= " +
                              std::to_string(cfg.min_pairs) + ")");
    }

    const Matrix wb_t = conjugate_matrix(data_model).transpose();
    const int batches_per_chain =
        std::max<int>(1, cfg.n_batches / static_cast<int>(chains.size()));

    ResponseCurve curve;
    curve.times = lags;
    curve.n_samples = total_rows;
    curve.values.assign(lags.size(), Matrix::Zero(q, n));
    curve.stderrs.assign(lags.size(), Matrix::Zero(q, n));

    std::vector<Matrix> amats;
    amats.reserve(chains.size());
    for (const Trajectory& t : chains) amats.push_back(observable_rows(observable, t.states));

    for (std::size_t j = 0; j < lags.size(); ++j) {
        const long lag = idx[j];
        std::vector<Matrix> batch_means;
        Matrix total = Matrix::Zero(q, n);
        long total_pairs = 0;
        for (std::size_t c = 0; c < chains.size(); ++c) {
            const Matrix& x = chains[c].states;
            const Matrix& a = amats[c];
            const long pairs = x.rows() - lag;
            if (pairs <= 0) continue;
            const int nb = static_cast<int>(std::min<long>(batches_per_chain, pairs));
            for (int b = 0; b < nb; ++b) {
                const long lo = pairs * b / nb;
                const long hi = pairs * (b + 1) / nb;
                if (hi <= lo) continue;
                Matrix g = a.middleRows(lo + lag, hi - lo).transpose() *
                           x.middleRows(lo, hi - lo) * wb_t;
                total += g;
                total_pairs += hi - lo;
                batch_means.push_back(g / static_cast<double>(hi - lo));
            }
        }
        curve.values[j] = total / static_cast<double>(total_pairs);
        const std::size_t nb = batch_means.size();
        if (nb >= 2) {
            Matrix mean = Matrix::Zero(q, n);
            for (const Matrix& m : batch_means) mean += m;
            mean /= static_cast<double>(nb);
            Matrix var = Matrix::Zero(q, n);
            for (const Matrix& m : batch_means) var += (m - mean).cwiseAbs2();
            var /= static_cast<double>(nb - 1);
            curve.stderrs[j] = (var / static_cast<double>(nb)).cwiseSqrt();
        }
    }
    curve.validate();
    return curve;
}

ResponseCurve estimate_response(const Trajectory& traj, const Observable& observable,
                                const ModelSpec& data_model,
                                const std::vector<double>& lags,
                                const ResponseConfig& cfg) {
    std::vector<Trajectory> one;
    one.push_back(traj);
    return estimate_response(one, observable, data_model, lags, cfg);
}

namespace {

struct Stencil {
    std::vector<long> offsets;
    std::vector<double> coeffs;  // divided by h^order at use
};

Stencil stencil_for(int order, bool at_left_edge) {
    if (order == 1) {
        if (at_left_edge) return {{0, 1, 2, 3}, {-11.0 / 6, 3.0, -1.5, 1.0 / 3}};
        return {{-1, 1}, {-0.5, 0.5}};
    }
    if (order == 2) {
        if (at_left_edge) return {{0, 1, 2, 3}, {2.0, -5.0, 4.0, -1.0}};
        return {{-1, 0, 1}, {1.0, -2.0, 1.0}};
    }
    if (order == 3) {
        if (at_left_edge) return {{0, 1, 2, 3, 4}, {-2.5, 9.0, -12.0, 7.0, -1.5}};
        return {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}};
    }
    throw std::invalid_argument("finite_difference_derivative: order must be 1..3");
}

Matrix apply_stencil(const ResponseCurve& curve, const Stencil& st, std::size_t i0,
                     long spacing_steps, double h) {
    Matrix out = Matrix::Zero(curve.q(), curve.n());
    for (std::size_t k = 0; k < st.offsets.size(); ++k) {
        out += st.coeffs[k] * curve.values[i0 + st.offsets[k] * spacing_steps];
    }
    return out / h;
}

}  // namespace

EssentialStatEntry finite_difference_derivative(const ResponseCurve& curve,
                                                int order, double anchor) {
    curve.validate();
    const std::size_t i0 = curve.index_of(anchor);
    const bool left_edge = (i0 == 0);
    const Stencil st = stencil_for(order, left_edge);

    const long min_off = *std::min_element(st.offsets.begin(), st.offsets.end());
    const long max_off = *std::max_element(st.offsets.begin(), st.offsets.end());
    auto supports = [&](long spacing_steps) {
        const long lo = static_cast<long>(i0) + min_off * spacing_steps;
        const long hi = static_cast<long>(i0) + max_off * spacing_steps;
        if (lo < 0 || hi >= static_cast<long>(curve.size())) return false;
        const double h = curve.times[i0 + spacing_steps] - curve.times[i0];
        for (long k = lo; k < hi; ++k) {  // uniform spacing across the window
            if (!close(curve.times[k + 1] - curve.times[k],
                       h / static_cast<double>(spacing_steps), 1e-6)) {
                return false;
            }
        }
        return true;
    };
    if (!supports(1)) {
        throw GridError("finite_difference_derivative: grid too coarse or non-uniform "
                        "around the anchor for the requested stencil");
    }

    const double h1 = (i0 + 1 < curve.size()) ? curve.times[i0 + 1] - curve.times[i0]
                                              : curve.times[i0] - curve.times[i0 - 1];
    const double hp = std::pow(h1, order);
    EssentialStatEntry entry;
    entry.order = order;
    entry.time = anchor;
    entry.method = "finite-difference";
    entry.value = apply_stencil(curve, st, i0, 1, hp);

    // Error estimate: Richardson-style doubled-spacing difference plus
    // propagated curve noise through the stencil weights.
    Matrix err = Matrix::Zero(curve.q(), curve.n());
    if (supports(2)) {
        const Matrix d2 = apply_stencil(curve, st, i0, 2, std::pow(2.0 * h1, order));
        err = (entry.value - d2).cwiseAbs();
    }
    if (!curve.stderrs.empty()) {
        Matrix noise = Matrix::Zero(curve.q(), curve.n());
        for (std::size_t k = 0; k < st.offsets.size(); ++k) {
            const Matrix& se = curve.stderrs[i0 + st.offsets[k]];
            noise += (st.coeffs[k] / hp) * (st.coeffs[k] / hp) * se.cwiseAbs2();
        }
        err = (err.cwiseAbs2() + noise).cwiseSqrt();
    }
    entry.stderr_est = err;
    return entry;
}

namespace {

struct BatchAccumulator {
    std::vector<double> batch_means;
    double total = 0.0;
    long count = 0;

    void add_batch(double sum, long n) {
        if (n <= 0) return;
        total += sum;
        count += n;
        batch_means.push_back(sum / static_cast<double>(n));
    }
    double mean() const { return total / static_cast<double>(count); }
    double stderr_batch() const {
        const std::size_t nb = batch_means.size();
        if (nb < 2) return 0.0;
        double m = 0.0;
        for (double v : batch_means) m += v;
        m /= static_cast<double>(nb);
        double var = 0.0;
        for (double v : batch_means) var += (v - m) * (v - m);
        var /= static_cast<double>(nb - 1);
        return std::sqrt(var / static_cast<double>(nb));
    }
};

}  // namespace

LangevinEqMoments equilibrium_moments(const std::vector<Trajectory>& chains,
                                      const LangevinModel& candidate,
                                      int n_batches) {
    if (chains.empty()) throw std::invalid_argument("equilibrium_moments: no trajectories");
    long total = 0;
    for (const Trajectory& t : chains) {
        if (t.dim() != 2) throw std::invalid_argument("equilibrium_moments: need (x, v) trajectories");
        total += t.rows();
    }
    if (total < 100000) {
        throw SampleSizeError("equilibrium_moments: need >= 1e5 retained samples, got " +
                              std::to_string(total));
    }

    BatchAccumulator upp, upp_sq, up_uppp, u4, mx, mx2, v2, v4;
    const int per_chain = std::max<int>(1, n_batches / static_cast<int>(chains.size()));
    for (const Trajectory& t : chains) {
        const long rows = t.rows();
        const int nb = static_cast<int>(std::min<long>(per_chain, rows));
        for (int b = 0; b < nb; ++b) {
            const long lo = rows * b / nb;
            const long hi = rows * (b + 1) / nb;
            double s_upp = 0, s_upp_sq = 0, s_up_uppp = 0, s_u4 = 0;
            double s_x = 0, s_x2 = 0, s_v2 = 0, s_v4 = 0;
            for (long i = lo; i < hi; ++i) {
                const double x = t.states(i, 0);
                const double v = t.states(i, 1);
                const double d1 = potential_derivative(candidate, x, 1);
                const double d2 = potential_derivative(candidate, x, 2);
                const double d3 = potential_derivative(candidate, x, 3);
                const double d4 = potential_derivative(candidate, x, 4);
                s_upp += d2;
                s_upp_sq += d2 * d2;
                s_up_uppp += d1 * d3;
                s_u4 += d4;
                s_x += x;
                s_x2 += x * x;
                s_v2 += v * v;
                s_v4 += v * v * v * v;
            }
            const long cnt = hi - lo;
            upp.add_batch(s_upp, cnt);
            upp_sq.add_batch(s_upp_sq, cnt);
            up_uppp.add_batch(s_up_uppp, cnt);
            u4.add_batch(s_u4, cnt);
            mx.add_batch(s_x, cnt);
            mx2.add_batch(s_x2, cnt);
            v2.add_batch(s_v2, cnt);
            v4.add_batch(s_v4, cnt);
        }
    }

    LangevinEqMoments m;
    m.n_samples = total;
    m.e_upp = upp.mean();
    m.se_e_upp = upp.stderr_batch();
    m.e_upp_sq = upp_sq.mean();
    m.se_e_upp_sq = upp_sq.stderr_batch();
    m.e_up_uppp = up_uppp.mean();
    m.se_e_up_uppp = up_uppp.stderr_batch();
    m.e_u4 = u4.mean();
    m.se_e_u4 = u4.stderr_batch();
    m.e_x = mx.mean();
    m.se_e_x = mx.stderr_batch();
    m.var_x = mx2.mean() - m.e_x * m.e_x;
    // variance of per-batch variances as the batch-means proxy
    {
        std::vector<double> vb(mx.batch_means.size());
        for (std::size_t i = 0; i < vb.size(); ++i) {
            vb[i] = mx2.batch_means[i] - mx.batch_means[i] * mx.batch_means[i];
        }
        double mean = 0;
        for (double v : vb) mean += v;
        mean /= static_cast<double>(vb.size());
        double var = 0;
        for (double v : vb) var += (v - mean) * (v - mean);
        m.se_var_x = vb.size() >= 2
                         ? std::sqrt(var / static_cast<double>(vb.size() - 1) /
                                     static_cast<double>(vb.size()))
                         : 0.0;
    }
    m.e_v2 = v2.mean();
    m.se_e_v2 = v2.stderr_batch();
    m.e_v4 = v4.mean();
    m.se_e_v4 = v4.stderr_batch();

    if (!(m.var_x > 0.0) || !(m.e_v2 > 0.0) || m.e_v4 < m.e_v2 * m.e_v2 * (1.0 - 1e-12)) {
        throw std::invalid_argument("equilibrium_moments: moment sanity check failed");
    }
    return m;
}

LangevinEqMoments equilibrium_moments(const Trajectory& traj,
                                      const LangevinModel& candidate,
                                      int n_batches) {
    std::vector<Trajectory> one;
    one.push_back(traj);
    return equilibrium_moments(one, candidate, n_batches);
}

}  // namespace fdtinfer
