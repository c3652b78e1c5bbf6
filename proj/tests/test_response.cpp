#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdtinfer/errors.hpp"
#include "fdtinfer/response.hpp"

#include <cmath>

using namespace fdtinfer;

namespace {

ResponseCurve synthetic_scalar(const std::vector<double>& ts,
                               double (*f)(double)) {
    ResponseCurve c;
    c.times = ts;
    c.n_samples = 1;
    for (double t : ts) {
        Matrix v(1, 1);
        v(0, 0) = f(t);
        c.values.push_back(v);
    }
    return c;
}

std::vector<double> uniform_grid(double h, int n) {
    std::vector<double> ts(n);
    for (int i = 0; i < n; ++i) ts[i] = i * h;
    return ts;
}

}  // namespace

TEST_CASE("conjugate variable for the three families") {
    ModelSpec triad{TriadModel::reference()};
    Vector xt(3);
    xt << 0.1, 0.0, 0.0;
    Vector bt = conjugate_variable(triad, xt);
    CHECK(std::abs(bt(0) - 5.0) < 1e-12);
    CHECK(bt(1) == 0.0);
    CHECK(bt(2) == 0.0);

    ModelSpec lang{LangevinModel(1.0, 0.5, 1.0, 1.0, 0.0)};
    Vector s(2);
    s << 3.0, 0.5;
    Vector bl = conjugate_variable(lang, s);
    CHECK(bl(0) == 0.0);
    CHECK(std::abs(bl(1) - 0.5) < 1e-14);

    // linear family with stationary covariance diag(1, 4)
    Matrix c = -Matrix::Identity(2, 2);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = std::sqrt(2.0);
    d(1, 1) = std::sqrt(8.0);
    ModelSpec lin{LinearModel(c, d)};
    Vector x(2);
    x << 1.0, 2.0;
    Vector b = conjugate_variable(lin, x);
    CHECK(std::abs(b(0) - 1.0) < 1e-10);
    CHECK(std::abs(b(1) - 0.5) < 1e-10);
}

TEST_CASE("estimated linear response converges to the matrix exponential") {
    Matrix cm(2, 2);
    cm << -1, 1, 0, -2;
    ModelSpec spec{LinearModel(cm, Matrix::Identity(2, 2))};

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 4'000'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 50'000;
    cfg.seed = 42;
    Trajectory traj = integrate(spec, cfg);

    std::vector<double> lags;
    for (int k = 0; k <= 10; ++k) lags.push_back(0.2 * k);
    ResponseCurve curve = estimate_response(traj, Observable{ObservableKind::Identity},
                                            spec, lags);
    REQUIRE(curve.size() == lags.size());
    for (std::size_t j = 0; j < lags.size(); ++j) {
        Matrix truth = expm(lags[j] * cm);
        for (int r = 0; r < 2; ++r) {
            for (int cc = 0; cc < 2; ++cc) {
                const double band = 3.0 * curve.stderrs[j](r, cc) + 2e-3;
                CHECK(std::abs(curve.values[j](r, cc) - truth(r, cc)) < band);
            }
        }
    }
}

TEST_CASE("lag-0 response is the normalized sample covariance") {
    ModelSpec spec{TriadModel::reference()};
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 600'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 50'000;
    cfg.seed = 8;
    Trajectory traj = integrate(spec, cfg);

    ResponseCurve curve = estimate_response(traj, Observable{ObservableKind::Identity},
                                            spec, {0.0});
    Matrix second_moment =
        traj.states.transpose() * traj.states / static_cast<double>(traj.rows());
    Matrix expected = second_moment / TriadModel::reference().sigma_eq_sq();
    CHECK((curve.values[0] - expected).cwiseAbs().maxCoeff() < 1e-10);

    // and it converges to the identity (3 stderr band)
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double target = r == c ? 1.0 : 0.0;
            CHECK(std::abs(curve.values[0](r, c) - target) <
                  3.0 * curve.stderrs[0](r, c) + 5e-3);
        }
    }
}

TEST_CASE("estimator is linear in the observable") {
    ModelSpec spec{LangevinModel::reference()};
    SimConfig cfg;
    cfg.dt = 2e-3;
    cfg.n_steps = 400'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 20'000;
    cfg.seed = 77;
    Trajectory traj = integrate(spec, cfg);

    std::vector<double> lags{0.0, 0.1, 0.5};
    ResponseCurve ident = estimate_response(traj, Observable{ObservableKind::Identity},
                                            spec, lags);
    ResponseCurve vel = estimate_response(traj, Observable{ObservableKind::Velocity},
                                          spec, lags);
    Matrix proj = Matrix::Zero(2, 2);
    proj(1, 1) = 1.0;  // velocity observable = proj * identity observable
    for (std::size_t j = 0; j < lags.size(); ++j) {
        CHECK(((proj * ident.values[j]) - vel.values[j]).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("lag validation") {
    ModelSpec spec{TriadModel::reference()};
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 200'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 10'000;
    cfg.seed = 5;
    Trajectory traj = integrate(spec, cfg);

    CHECK_THROWS_AS(estimate_response(traj, Observable{ObservableKind::Identity}, spec,
                                      {0.0, 0.0033}),
                    GridError);
    CHECK_THROWS_AS(estimate_response(traj, Observable{ObservableKind::Identity}, spec,
                                      {0.0, 300.0}),
                    SampleSizeError);
}

TEST_CASE("finite differences on exact curves") {
    auto exp_curve = synthetic_scalar(uniform_grid(0.01, 40),
                                      [](double t) { return std::exp(-t); });
    EssentialStatEntry d1 = finite_difference_derivative(exp_curve, 1, 0.0);
    CHECK(std::abs(d1.value(0, 0) - (-1.0)) < 1e-3);
    CHECK(d1.method == "finite-difference");

    auto cos_curve = synthetic_scalar(uniform_grid(0.01, 40),
                                      [](double t) { return std::cos(t); });
    EssentialStatEntry d2 = finite_difference_derivative(cos_curve, 2, 0.0);
    CHECK(std::abs(d2.value(0, 0) - (-1.0)) < 1e-3);

    EssentialStatEntry d3 = finite_difference_derivative(exp_curve, 3, 0.0);
    CHECK(std::abs(d3.value(0, 0) - (-1.0)) < 5e-3);

    // interior anchors use centered stencils
    EssentialStatEntry di = finite_difference_derivative(exp_curve, 1, 0.2);
    CHECK(std::abs(di.value(0, 0) - (-std::exp(-0.2))) < 1e-3);

    CHECK_THROWS_AS(finite_difference_derivative(exp_curve, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(finite_difference_derivative(exp_curve, 1, 0.005), GridError);
    CHECK_THROWS_AS(finite_difference_derivative(exp_curve, 1, 0.39), GridError);

    auto nonuniform = synthetic_scalar({0.0, 0.01, 0.03, 0.07, 0.15},
                                       [](double t) { return std::exp(-t); });
    CHECK_THROWS_AS(finite_difference_derivative(nonuniform, 1, 0.0), GridError);
}

TEST_CASE("finite-difference error estimate tracks the truth") {
    auto curve = synthetic_scalar(uniform_grid(0.05, 60),
                                  [](double t) { return std::exp(-2.0 * t); });
    EssentialStatEntry d = finite_difference_derivative(curve, 1, 0.0);
    const double actual_err = std::abs(d.value(0, 0) - (-2.0));
    CHECK(d.stderr_est(0, 0) >= 0.2 * actual_err);  // not wildly optimistic
    CHECK(d.stderr_est(0, 0) < 100 * actual_err + 1e-6);
}

TEST_CASE("langevin equilibrium moments") {
    LangevinModel m = LangevinModel::reference();
    ModelSpec spec{m};
    SimConfig cfg;
    cfg.dt = 5e-3;
    cfg.n_steps = 3'000'000;
    cfg.subsample_stride = 2;
    cfg.burn_in_steps = 50'000;
    cfg.seed = 2025;
    Trajectory traj = integrate(spec, cfg);
    LangevinEqMoments mc = equilibrium_moments(traj, m);
    LangevinEqMoments exact = langevin_moments_quadrature(m);

    CHECK(std::abs(mc.e_v2 - m.kBT) < 3.0 * mc.se_e_v2 + 2e-3);
    CHECK(std::abs(mc.e_v4 - 3.0 * m.kBT * m.kBT) < 3.0 * mc.se_e_v4 + 1e-2);
    CHECK(std::abs(mc.e_upp - exact.e_upp) < 4.0 * mc.se_e_upp + 1e-3);
    CHECK(std::abs(mc.e_u4 - exact.e_u4) < 4.0 * mc.se_e_u4 + 5e-3);
    CHECK(std::abs(mc.e_x - exact.e_x) < 4.0 * mc.se_e_x + 0.05);
    CHECK(std::abs(mc.var_x - exact.var_x) < 4.0 * mc.se_var_x + 1.0);

    SimConfig tiny = cfg;
    tiny.n_steps = 30'000;
    tiny.burn_in_steps = 0;
    CHECK_THROWS_AS(equilibrium_moments(integrate(spec, tiny), m), SampleSizeError);
}

TEST_CASE("scale parameters are recoverable from equilibrium moments") {
    // data generated at (a, x0) = (2, 1); unit-scale run at (1, 0)
    LangevinModel truth(0.2, 0.5, 1.0, 2.0, 1.0);
    LangevinModel unit(0.2, 0.5, 1.0, 1.0, 0.0);

    SimConfig cfg;
    cfg.dt = 5e-3;
    cfg.n_steps = 4'000'000;
    cfg.subsample_stride = 4;
    cfg.burn_in_steps = 100'000;
    cfg.seed = 814;
    Trajectory data = integrate(ModelSpec{truth}, cfg);
    cfg.seed = 815;
    Trajectory unit_run = integrate(ModelSpec{unit}, cfg);

    LangevinEqMoments md = equilibrium_moments(data, truth);
    LangevinEqMoments mu = equilibrium_moments(unit_run, unit);

    const double a_hat = std::sqrt(mu.var_x / md.var_x);
    const double x0_hat = md.e_x - mu.e_x / a_hat;

    const double se_a = 0.5 * a_hat *
                        std::hypot(mu.se_var_x / mu.var_x, md.se_var_x / md.var_x);
    const double se_x0 = std::hypot(md.se_e_x, mu.se_e_x / a_hat) +
                         mu.e_x / (a_hat * a_hat) * se_a;
    CHECK(std::abs(a_hat - 2.0) < 3.0 * se_a + 0.02);
    CHECK(std::abs(x0_hat - 1.0) < 3.0 * se_x0 + 0.02);
}

TEST_CASE("essential stats reject duplicates and negative anchors") {
    EssentialStats stats;
    EssentialStatEntry e;
    e.order = 1;
    e.time = 0.0;
    e.value = Matrix::Identity(2, 2);
    e.method = "analytic";
    stats.add(e);
    CHECK_THROWS_AS(stats.add(e), std::invalid_argument);
    e.time = -1.0;
    CHECK_THROWS_AS(stats.add(e), std::invalid_argument);
    CHECK(stats.find(1, 0.0) != nullptr);
    CHECK(stats.find(2, 0.0) == nullptr);
}
