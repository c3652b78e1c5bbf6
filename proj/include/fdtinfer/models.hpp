#pragma once

#include "fdtinfer/linalg.hpp"

#include <limits>
#include <optional>
#include <string>
#include <variant>

namespace fdtinfer {

/// dx = C x dt + D dW with C Hurwitz (all eigenvalues in the open left
/// half-plane), so the dynamics are ergodic with Gaussian equilibrium.
struct LinearModel {
    Matrix C;  // n x n drift
    Matrix D;  // n x d diffusion amplitude

    LinearModel(Matrix c, Matrix d);
    int state_dim() const { return static_cast<int>(C.rows()); }
    int noise_dim() const { return static_cast<int>(D.cols()); }
    /// Stationary covariance from C S + S C^T + D D^T = 0.
    Matrix stationary_covariance() const;
};

/// Energy-conserving triad system
///   dx/dt = B(x,x) + L x - Lambda x + sigma Lambda^{1/2} W'
/// with B(x,x) = (B1 x2 x3, B2 x1 x3, B3 x1 x2), B3 = -B1 - B2 so that
/// x . B(x,x) = 0. Equilibrium is N(0, sigma_eq^2 I), sigma_eq^2 = sigma^2/2.
struct TriadModel {
    double B1;
    double B2;
    Matrix L;       // 3x3 skew-symmetric
    Matrix Lambda;  // 3x3 symmetric positive definite
    double sigma;

    TriadModel(double b1, double b2, Matrix l, Matrix lambda, double sigma_);
    double B3() const { return -B1 - B2; }
    double sigma_eq_sq() const { return 0.5 * sigma * sigma; }
    int state_dim() const { return 3; }
    int noise_dim() const { return 3; }

    /// The triad used in the reference experiments: B=(0.5, 1, -1.5),
    /// L the skew beta-effect operator, Lambda the tridiagonal-like
    /// dissipation, sigma = 1/5.
    static TriadModel reference();
};

/// Underdamped particle in a Morse potential with a weak quadratic retainer:
///   U(x) = U0(a (x - x0)),  U0(y) = epsilon (e^{-2y} - 2 e^{-y} + 0.01 y^2)
///   dx = v dt,  dv = (-U'(x) - gamma v) dt + sqrt(2 gamma kBT) dW.
struct LangevinModel {
    double epsilon;
    double gamma;
    double kBT;
    double a;
    double x0;

    LangevinModel(double epsilon_, double gamma_, double kbt, double a_,
                  double x0_);
    int state_dim() const { return 2; }
    int noise_dim() const { return 1; }

    /// Defaults used throughout the experiments (gamma varies per run).
    static LangevinModel reference(double gamma_ = 0.5) {
        return LangevinModel(0.2, gamma_, 1.0, 1.0, 0.0);
    }
};

class ModelSpec {
public:
    ModelSpec(LinearModel m) : model_(std::move(m)) {}
    ModelSpec(TriadModel m) : model_(std::move(m)) {}
    ModelSpec(LangevinModel m) : model_(std::move(m)) {}

    int state_dim() const;
    int noise_dim() const;
    std::string family() const;  // "linear" | "triad" | "langevin"

    bool is_linear() const { return std::holds_alternative<LinearModel>(model_); }
    bool is_triad() const { return std::holds_alternative<TriadModel>(model_); }
    bool is_langevin() const { return std::holds_alternative<LangevinModel>(model_); }

    const LinearModel& linear() const { return std::get<LinearModel>(model_); }
    const TriadModel& triad() const { return std::get<TriadModel>(model_); }
    const LangevinModel& langevin() const { return std::get<LangevinModel>(model_); }

private:
    std::variant<LinearModel, TriadModel, LangevinModel> model_;
};

enum class ObservableKind {
    Identity,        // A(x) = x, any family
    Velocity,        // A(x) = (0, v), Langevin
    QuadraticTriad,  // A(x) = (x2 x3, x1 x3, x1 x2), triad
};

struct Observable {
    ObservableKind kind = ObservableKind::Identity;

    int output_dim(int state_dim) const;
    void validate_for(const ModelSpec& model) const;
    Vector apply(const Vector& state) const;
    std::string name() const;
};

Vector drift(const ModelSpec& model, const Vector& x);

/// Constant diffusion matrix of the family (state_dim x noise_dim);
/// the triad uses the symmetric spectral root of Lambda.
Matrix diffusion(const ModelSpec& model);

/// U^(order)(x) for order in 0..4, via a^order U0^(order)(a (x - x0)).
double potential_derivative(const LangevinModel& model, double x, int order);

struct TriadMStats {
    Matrix M0;
    Matrix M1;
    Matrix M2;
};

/// Closed-form response derivatives at t=0 of the identity observable:
///   M0 = r I,  M1 = r (L - Lambda),
///   M2 = r [ (L - Lambda)^2 - sigma_eq^2 diag(B1^2, B2^2, B3^2) ],
/// where r = sigma_eq^2 / sigma_eq_data^2 (1 in the self-consistent case).
TriadMStats triad_M0_M1_M2(const TriadModel& model,
                           std::optional<double> sigma_eq_data_sq = {});

/// Slope at t=0 of the quadratic-observable response:
///   (sigma_eq^4 / sigma_eq_data^2) diag(B2+B3, B1+B3, B1+B2).
/// Linear in the B_i, which is what disambiguates their signs.
Matrix triad_quadratic_response_slope(const TriadModel& model,
                                      std::optional<double> sigma_eq_data_sq = {});

constexpr double kUnsetMoment = std::numeric_limits<double>::quiet_NaN();

/// Equilibrium moments entering the Langevin response derivatives.
/// The potential moments default to NaN so an incomplete set is detectable.
/// Standard errors are zero for quadrature-computed moments.
struct LangevinEqMoments {
    double e_upp = kUnsetMoment;      // E[U'']
    double e_upp_sq = kUnsetMoment;   // E[(U'')^2]
    double e_up_uppp = kUnsetMoment;  // E[U' U''']
    double e_u4 = kUnsetMoment;       // E[U''''];  note E[U' U'''] = kBT E[U'''']
    double e_x = 0.0;
    double var_x = 0.0;
    double e_v2 = 0.0;
    double e_v4 = 0.0;
    double se_e_upp = 0.0;
    double se_e_upp_sq = 0.0;
    double se_e_up_uppp = 0.0;
    double se_e_u4 = 0.0;
    double se_e_x = 0.0;
    double se_var_x = 0.0;
    double se_e_v2 = 0.0;
    double se_e_v4 = 0.0;
    long n_samples = 0;
};

struct LangevinMStats {
    double M0, M1, M2, M3, M4, M5;
};

/// Response derivatives at t=0 of the velocity observable, as functions of
/// the candidate model's (gamma, kBT) and its equilibrium potential moments.
/// kBT_data is the temperature used in the conjugate variable normalization
/// (defaults to the candidate's own, giving M0 = 1).
LangevinMStats langevin_m_stats(const LangevinModel& model,
                                const LangevinEqMoments& moments,
                                std::optional<double> kBT_data = {});

/// Unit-scale (a=1, x0=0) equilibrium moments by composite quadrature of
/// exp(-U0/kBT); the deterministic counterpart of the sampling estimator.
LangevinEqMoments langevin_moments_quadrature(double epsilon, double kBT);

/// Same moments for a model with general (a, x0), via the exact rescaling
/// of the unit-scale integrals.
LangevinEqMoments langevin_moments_quadrature(const LangevinModel& model);

}  // namespace fdtinfer
