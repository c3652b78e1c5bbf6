#pragma once

#include "fdtinfer/models.hpp"
#include "fdtinfer/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace fdtinfer {

struct SimConfig {
    double dt = 1e-3;
    std::int64_t n_steps = 0;
    std::int64_t subsample_stride = 1;
    std::int64_t burn_in_steps = -1;  // negative: default to 10% of n_steps
    std::uint64_t seed = 0;
    int n_chains = 1;
    /// Empty: draw the initial state from the family's equilibrium.
    std::optional<Vector> initial_state;
    int n_threads = 1;

    std::int64_t effective_burn_in() const {
        return burn_in_steps >= 0 ? burn_in_steps : n_steps / 10;
    }
    void validate(int state_dim) const;
};

struct Trajectory {
    Matrix states;        // T x n, one retained sample per row
    double dt_effective;  // dt * subsample_stride
    SimConfig config;
    std::string model_family;

    long rows() const { return static_cast<long>(states.rows()); }
    int dim() const { return static_cast<int>(states.cols()); }
};

/// Draw one state from the family's equilibrium: the exact Gaussian for the
/// linear and triad families; for Langevin, v ~ N(0, kBT) and x by rejection
/// sampling of exp(-U/kBT) over a bracket covering all weight above e^{-45}.
Vector equilibrium_draw(const ModelSpec& model, Rng& rng);

/// Generate one equilibrium trajectory with the two-stage weak trapezoidal
/// scheme (theta = 1/2), for the constant diffusion b of these families:
///   x*    = x + (dt/2) a(x)  + b sqrt(dt/2) xi1
///   x_new = x* + (dt/2) (2 a(x*) - a(x)) + b sqrt(dt/2) xi2
/// After burn_in_steps, every subsample_stride-th state is retained, giving
/// floor((n_steps - burn_in) / stride) rows. Fixed seeds give bit-identical
/// output. Non-finite states raise BlowupError with the step index.
Trajectory integrate(const ModelSpec& model, const SimConfig& cfg);

/// n_chains independent trajectories; chain i uses Rng::for_chain(seed, i),
/// so the result does not depend on scheduling. Chains may run in parallel
/// (cfg.n_threads) and are returned in chain-index order.
std::vector<Trajectory> ensemble(const ModelSpec& model, const SimConfig& cfg);

/// Explicit Euler-Maruyama integrator with the same retention contract;
/// kept as an independent cross-check of the weak trapezoidal scheme.
Trajectory euler_maruyama_oracle(const ModelSpec& model, const SimConfig& cfg);

}  // namespace fdtinfer
