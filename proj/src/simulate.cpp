#include "fdtinfer/simulate.hpp"

#include "fdtinfer/errors.hpp"

#include <cmath>
#include <future>
#include <stdexcept>

namespace fdtinfer {

void SimConfig::validate(int state_dim) const {
    if (!(dt > 0.0)) throw std::invalid_argument("SimConfig: dt must be positive");
    if (n_steps <= 0) throw std::invalid_argument("SimConfig: n_steps must be positive");
    if (subsample_stride < 1) throw std::invalid_argument("SimConfig: subsample_stride must be >= 1");
    if (effective_burn_in() >= n_steps) throw std::invalid_argument("SimConfig: burn-in must be < n_steps");
    if (n_chains < 1) throw std::invalid_argument("SimConfig: n_chains must be >= 1");
    if (n_threads < 1) throw std::invalid_argument("SimConfig: n_threads must be >= 1");
    if (initial_state && initial_state->size() != state_dim) {
        throw std::invalid_argument("SimConfig: initial_state dimension mismatch");
    }
}

Vector equilibrium_draw(const ModelSpec& model, Rng& rng) {
    if (model.is_linear()) {
        const Matrix s = model.linear().stationary_covariance();
        const Matrix root = spd_sqrt(s);
        Vector z(s.rows());
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
        return root * z;
    }
    if (model.is_triad()) {
        const double sd = std::sqrt(model.triad().sigma_eq_sq());
        Vector x(3);
        for (int i = 0; i < 3; ++i) x(i) = sd * rng.normal();
        return x;
    }
    const LangevinModel& m = model.langevin();
    // Bracket in the unit-scale variable y = a (x - x0): the Morse wall on
    // the left and the 0.01 y^2 retainer on the right both reach 45 kBT.
    const double lo = -0.5 * std::log(45.0 * m.kBT / m.epsilon) - 1.0;
    const double hi = std::sqrt(45.0 * m.kBT / (0.01 * m.epsilon)) + 1.0;
    const double u0_min = -m.epsilon;  // U0 >= U0(0) = -epsilon everywhere
    double y = 0.0;
    LangevinModel unit(m.epsilon, m.gamma, m.kBT, 1.0, 0.0);
    for (int tries = 0; tries < 100000; ++tries) {
        y = lo + (hi - lo) * rng.uniform();
        const double w = std::exp(-(potential_derivative(unit, y, 0) - u0_min) / m.kBT);
        if (rng.uniform() <= w) break;
    }
    Vector s(2);
    s << m.x0 + y / m.a, std::sqrt(m.kBT) * rng.normal();
    return s;
}

namespace {

enum class Scheme { WeakTrapezoidal, EulerMaruyama };

Trajectory run_chain(const ModelSpec& model, const SimConfig& cfg, Rng rng,
                     int chain_index, Scheme scheme) {
    const int n = model.state_dim();
    const int d = model.noise_dim();
    const std::int64_t burn_in = cfg.effective_burn_in();
    const std::int64_t stride = cfg.subsample_stride;
    const std::int64_t retained = (cfg.n_steps - burn_in) / stride;
    if (retained <= 0) throw std::invalid_argument("integrate: no samples retained");
    Vector x = cfg.initial_state ? *cfg.initial_state : equilibrium_draw(model, rng);

    const Matrix b = diffusion(model);
    const double sqrt_half_dt = std::sqrt(0.5 * cfg.dt);
    const double sqrt_dt = std::sqrt(cfg.dt);
    const double half_dt = 0.5 * cfg.dt;

    Trajectory traj;
    traj.states.resize(retained, n);
    traj.dt_effective = cfg.dt * static_cast<double>(stride);
    traj.config = cfg;
    traj.model_family = model.family();

    Vector xi(d), x_mid(n);
    std::int64_t row = 0;
    for (std::int64_t step = 1; step <= cfg.n_steps; ++step) {
        if (scheme == Scheme::WeakTrapezoidal) {
            const Vector a0 = drift(model, x);
            for (int k = 0; k < d; ++k) xi(k) = rng.normal();
            x_mid = x + half_dt * a0 + sqrt_half_dt * (b * xi);
            const Vector a1 = drift(model, x_mid);
            for (int k = 0; k < d; ++k) xi(k) = rng.normal();
            x = x_mid + half_dt * (2.0 * a1 - a0) + sqrt_half_dt * (b * xi);
        } else {
            const Vector a0 = drift(model, x);
            for (int k = 0; k < d; ++k) xi(k) = rng.normal();
            x = x + cfg.dt * a0 + sqrt_dt * (b * xi);
        }
        if (!x.allFinite()) {
            throw BlowupError(static_cast<std::size_t>(step), chain_index,
                              "integrate: non-finite state at step " + std::to_string(step) +
                                  (chain_index >= 0 ? " (chain " + std::to_string(chain_index) + ")" : ""));
        }
        if (step > burn_in && (step - burn_in) % stride == 0 && row < retained) {
            traj.states.row(row++) = x.transpose();
        }
    }
    return traj;
}

std::vector<Trajectory> run_ensemble(const ModelSpec& model, const SimConfig& cfg,
                                     Scheme scheme) {
    cfg.validate(model.state_dim());
    std::vector<Trajectory> out(cfg.n_chains);
    if (std::min<int>(cfg.n_threads, cfg.n_chains) <= 1) {
        for (int c = 0; c < cfg.n_chains; ++c) {
            out[c] = run_chain(model, cfg, Rng::for_chain(cfg.seed, c), c, scheme);
        }
        return out;
    }
    std::vector<std::future<Trajectory>> futures;
    futures.reserve(cfg.n_chains);
    for (int c = 0; c < cfg.n_chains; ++c) {
        futures.push_back(std::async(std::launch::async, [&model, &cfg, scheme, c] {
            return run_chain(model, cfg, Rng::for_chain(cfg.seed, c), c, scheme);
        }));
    }
    for (int c = 0; c < cfg.n_chains; ++c) out[c] = futures[c].get();
    return out;
}

}  // namespace

Trajectory integrate(const ModelSpec& model, const SimConfig& cfg) {
    SimConfig one = cfg;
    one.n_chains = 1;
    one.validate(model.state_dim());
    return run_chain(model, one, Rng::for_chain(cfg.seed, 0), -1, Scheme::WeakTrapezoidal);
}

std::vector<Trajectory> ensemble(const ModelSpec& model, const SimConfig& cfg) {
    return run_ensemble(model, cfg, Scheme::WeakTrapezoidal);
}

Trajectory euler_maruyama_oracle(const ModelSpec& model, const SimConfig& cfg) {
    SimConfig one = cfg;
    one.n_chains = 1;
    one.validate(model.state_dim());
    return run_chain(model, one, Rng::for_chain(cfg.seed, 0), -1, Scheme::EulerMaruyama);
}

}  // namespace fdtinfer
