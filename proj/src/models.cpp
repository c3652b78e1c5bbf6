#include "fdtinfer/models.hpp"

#include "fdtinfer/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace fdtinfer {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

LinearModel::LinearModel(Matrix c, Matrix d) : C(std::move(c)), D(std::move(d)) {
    require(C.rows() >= 1 && C.rows() == C.cols(), "LinearModel: C must be square, n >= 1");
    require(D.rows() == C.rows() && D.cols() >= 1, "LinearModel: D must be n x d, d >= 1");
    require(C.allFinite() && D.allFinite(), "LinearModel: non-finite entries");
    require(spectral_abscissa(C) < 0.0, "LinearModel: C must have eigenvalues with negative real part");
}

Matrix LinearModel::stationary_covariance() const {
    return lyapunov_solve(C, D * D.transpose());
}

TriadModel::TriadModel(double b1, double b2, Matrix l, Matrix lambda, double sigma_)
    : B1(b1), B2(b2), L(std::move(l)), Lambda(std::move(lambda)), sigma(sigma_) {
    require(L.rows() == 3 && L.cols() == 3, "TriadModel: L must be 3x3");
    require(Lambda.rows() == 3 && Lambda.cols() == 3, "TriadModel: Lambda must be 3x3");
    require(L.allFinite() && Lambda.allFinite(), "TriadModel: non-finite entries");
    require(std::isfinite(B1) && std::isfinite(B2), "TriadModel: non-finite B");
    require((L + L.transpose()).cwiseAbs().maxCoeff() == 0.0,
            "TriadModel: L must be skew-symmetric");
    require((Lambda - Lambda.transpose()).cwiseAbs().maxCoeff() == 0.0,
            "TriadModel: Lambda must be symmetric");
    require(is_spd(Lambda), "TriadModel: Lambda must be positive definite");
    require(sigma > 0.0, "TriadModel: sigma must be positive");
}

TriadModel TriadModel::reference() {
    Matrix l(3, 3), lam(3, 3);
    l << 0, 1, 0,
        -1, 0, -1,
         0, 1, 0;
    lam << 1.0, 0.5, 0.25,
           0.5, 1.0, 0.5,
           0.25, 0.5, 1.0;
    return TriadModel(0.5, 1.0, l, lam, 0.2);
}

LangevinModel::LangevinModel(double epsilon_, double gamma_, double kbt,
                             double a_, double x0_)
    : epsilon(epsilon_), gamma(gamma_), kBT(kbt), a(a_), x0(x0_) {
    require(epsilon > 0.0, "LangevinModel: epsilon must be positive");
    require(gamma > 0.0, "LangevinModel: gamma must be positive");
    require(kBT > 0.0, "LangevinModel: kBT must be positive");
    require(a > 0.0, "LangevinModel: a must be positive");
    require(std::isfinite(x0), "LangevinModel: x0 must be finite");
}

int ModelSpec::state_dim() const {
    return std::visit([](const auto& m) { return m.state_dim(); }, model_);
}

int ModelSpec::noise_dim() const {
    return std::visit([](const auto& m) { return m.noise_dim(); }, model_);
}

std::string ModelSpec::family() const {
    if (is_linear()) return "linear";
    if (is_triad()) return "triad";
    return "langevin";
}

int Observable::output_dim(int state_dim) const {
    switch (kind) {
        case ObservableKind::Identity: return state_dim;
        case ObservableKind::Velocity: return 2;
        case ObservableKind::QuadraticTriad: return 3;
    }
    throw std::invalid_argument("Observable: unknown kind");
}

void Observable::validate_for(const ModelSpec& model) const {
    switch (kind) {
        case ObservableKind::Identity:
            return;
        case ObservableKind::Velocity:
            require(model.is_langevin(), "Velocity observable requires the Langevin family");
            return;
        case ObservableKind::QuadraticTriad:
            require(model.is_triad(), "QuadraticTriad observable requires the triad family");
            return;
    }
    throw std::invalid_argument("Observable: unknown kind");
}

Vector Observable::apply(const Vector& state) const {
    switch (kind) {
        case ObservableKind::Identity:
            return state;
        case ObservableKind::Velocity: {
            require(state.size() == 2, "Velocity observable: state must be (x, v)");
            Vector a(2);
            a << 0.0, state(1);
            return a;
        }
        case ObservableKind::QuadraticTriad: {
            require(state.size() == 3, "QuadraticTriad observable: state must be 3-d");
            Vector a(3);
            a << state(1) * state(2), state(0) * state(2), state(0) * state(1);
            return a;
        }
    }
    throw std::invalid_argument("Observable: unknown kind");
}

std::string Observable::name() const {
    switch (kind) {
        case ObservableKind::Identity: return "identity";
        case ObservableKind::Velocity: return "velocity";
        case ObservableKind::QuadraticTriad: return "quadratic-triad";
    }
    return "unknown";
}

Vector drift(const ModelSpec& model, const Vector& x) {
    require(x.size() == model.state_dim(), "drift: state dimension mismatch");
    if (model.is_linear()) {
        return model.linear().C * x;
    }
    if (model.is_triad()) {
        const TriadModel& m = model.triad();
        Vector b(3);
        b << m.B1 * x(1) * x(2), m.B2 * x(0) * x(2), m.B3() * x(0) * x(1);
        return b + (m.L - m.Lambda) * x;
    }
    const LangevinModel& m = model.langevin();
    Vector a(2);
    a << x(1), -potential_derivative(m, x(0), 1) - m.gamma * x(1);
    return a;
}

Matrix diffusion(const ModelSpec& model) {
    if (model.is_linear()) {
        return model.linear().D;
    }
    if (model.is_triad()) {
        const TriadModel& m = model.triad();
        return m.sigma * spd_sqrt(m.Lambda);
    }
    const LangevinModel& m = model.langevin();
    Matrix b(2, 1);
    b << 0.0, std::sqrt(2.0 * m.gamma * m.kBT);
    return b;
}

double potential_derivative(const LangevinModel& model, double x, int order) {
    if (order < 0 || order > 4) {
        throw std::invalid_argument("potential_derivative: order must be in 0..4");
    }
    const double y = model.a * (x - model.x0);
    const double e1 = std::exp(-y);
    const double e2 = e1 * e1;
    const double eps = model.epsilon;
    double u0;
    switch (order) {
        case 0: u0 = eps * (e2 - 2.0 * e1 + 0.01 * y * y); break;
        case 1: u0 = eps * (-2.0 * e2 + 2.0 * e1 + 0.02 * y); break;
        case 2: u0 = eps * (4.0 * e2 - 2.0 * e1 + 0.02); break;
        case 3: u0 = eps * (-8.0 * e2 + 2.0 * e1); break;
        default: u0 = eps * (16.0 * e2 - 2.0 * e1); break;
    }
    return std::pow(model.a, order) * u0;
}

TriadMStats triad_M0_M1_M2(const TriadModel& model,
                           std::optional<double> sigma_eq_data_sq) {
    const double s2 = model.sigma_eq_sq();
    const double data_s2 = sigma_eq_data_sq.value_or(s2);
    require(data_s2 > 0.0, "triad_M0_M1_M2: data sigma_eq^2 must be positive");
    const double r = s2 / data_s2;
    const Matrix c = model.L - model.Lambda;
    Vector b2(3);
    b2 << model.B1 * model.B1, model.B2 * model.B2, model.B3() * model.B3();
    TriadMStats out;
    out.M0 = r * Matrix::Identity(3, 3);
    out.M1 = r * c;
    out.M2 = r * (c * c - s2 * Matrix(b2.asDiagonal()));
    return out;
}

Matrix triad_quadratic_response_slope(const TriadModel& model,
                                      std::optional<double> sigma_eq_data_sq) {
    const double s2 = model.sigma_eq_sq();
    const double data_s2 = sigma_eq_data_sq.value_or(s2);
    require(data_s2 > 0.0, "triad_quadratic_response_slope: data sigma_eq^2 must be positive");
    Vector d(3);
    d << model.B2 + model.B3(), model.B1 + model.B3(), model.B1 + model.B2;
    return (s2 * s2 / data_s2) * Matrix(d.asDiagonal());
}

LangevinMStats langevin_m_stats(const LangevinModel& model,
                                const LangevinEqMoments& moments,
                                std::optional<double> kBT_data) {
    for (double v : {moments.e_upp, moments.e_upp_sq, moments.e_up_uppp, moments.e_u4}) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("langevin_m_stats: incomplete equilibrium moments");
        }
    }
    const double g = model.gamma;
    const double t_ratio = model.kBT / kBT_data.value_or(model.kBT);
    LangevinMStats s{};
    s.M0 = t_ratio;
    s.M1 = -g * t_ratio;
    s.M2 = g * g - moments.e_upp;
    s.M3 = 2.0 * g * moments.e_upp - g * g * g;
    s.M4 = -3.0 * model.kBT * moments.e_u4 + moments.e_upp_sq +
           3.0 * moments.e_up_uppp - 3.0 * g * g * moments.e_upp +
           g * g * g * g;
    s.M5 = 13.0 * g * model.kBT * moments.e_u4 - 3.0 * g * moments.e_upp_sq -
           13.0 * g * moments.e_up_uppp + 4.0 * g * g * g * moments.e_upp -
           g * g * g * g * g;
    return s;
}

LangevinEqMoments langevin_moments_quadrature(double epsilon, double kBT) {
    require(epsilon > 0.0 && kBT > 0.0, "langevin_moments_quadrature: positive parameters required");
    LangevinModel unit(epsilon, 1.0, kBT, 1.0, 0.0);  // gamma unused here

    // Integration window: left edge where the Morse wall reaches ~45 kBT,
    // right edge where the quadratic retainer does.
    const double lo = -0.5 * std::log(45.0 * kBT / epsilon) - 2.0;
    const double hi = std::sqrt(45.0 * kBT / (0.01 * epsilon)) + 5.0;
    const int n = 40000;  // composite Simpson, even count
    const double h = (hi - lo) / n;

    double z = 0, sx = 0, sx2 = 0, su2 = 0, su2sq = 0, su1u3 = 0, su4 = 0;
    for (int i = 0; i <= n; ++i) {
        const double y = lo + i * h;
        const double w0 = std::exp(-potential_derivative(unit, y, 0) / kBT);
        const double simp = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double w = simp * w0;
        const double u1 = potential_derivative(unit, y, 1);
        const double u2 = potential_derivative(unit, y, 2);
        const double u3 = potential_derivative(unit, y, 3);
        const double u4 = potential_derivative(unit, y, 4);
        z += w;
        sx += w * y;
        sx2 += w * y * y;
        su2 += w * u2;
        su2sq += w * u2 * u2;
        su1u3 += w * u1 * u3;
        su4 += w * u4;
    }
    LangevinEqMoments m;
    m.e_x = sx / z;
    m.var_x = sx2 / z - m.e_x * m.e_x;
    m.e_upp = su2 / z;
    m.e_upp_sq = su2sq / z;
    m.e_up_uppp = su1u3 / z;
    m.e_u4 = su4 / z;
    m.e_v2 = kBT;
    m.e_v4 = 3.0 * kBT * kBT;
    return m;
}

LangevinEqMoments langevin_moments_quadrature(const LangevinModel& model) {
    LangevinEqMoments unit = langevin_moments_quadrature(model.epsilon, model.kBT);
    const double a2 = model.a * model.a;
    LangevinEqMoments m = unit;
    m.e_x = model.x0 + unit.e_x / model.a;
    m.var_x = unit.var_x / a2;
    m.e_upp = a2 * unit.e_upp;
    m.e_upp_sq = a2 * a2 * unit.e_upp_sq;
    m.e_up_uppp = a2 * a2 * unit.e_up_uppp;
    m.e_u4 = a2 * a2 * unit.e_u4;
    return m;
}

}  // namespace fdtinfer
