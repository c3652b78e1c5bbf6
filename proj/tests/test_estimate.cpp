#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdtinfer/errors.hpp"
#include "fdtinfer/estimate.hpp"
#include "fdtinfer/rng.hpp"
#include "fdtinfer/simulate.hpp"

#include <cmath>

using namespace fdtinfer;

namespace {

Matrix random_stable_drift(Rng& rng, int n) {
    Matrix a(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) a(r, c) = rng.normal();
    return a - (spectral_abscissa(a) + 0.3 + rng.uniform()) * Matrix::Identity(n, n);
}

}  // namespace

TEST_CASE("solve_linear recovers the generating parameters from exact inputs") {
    Rng rng(2027);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 1 + trial % 3;
        Matrix c = random_stable_drift(rng, n);
        Matrix d(n, n);
        for (int r = 0; r < n; ++r)
            for (int cc = 0; cc < n; ++cc) d(r, cc) = rng.normal();
        d += 0.5 * Matrix::Identity(n, n);
        const Matrix ddt = d * d.transpose();
        const Matrix s = lyapunov_solve(c, ddt);

        EstimationReport rep = solve_linear(Matrix::Identity(n, n), c, s);
        REQUIRE(rep.recovered.has_value());
        const LinearModel& rec = rep.recovered->linear();
        CHECK((rec.C - c).norm() <= 1e-10 * (1.0 + c.norm()));
        CHECK((rec.D * rec.D.transpose() - ddt).norm() <= 1e-10 * (1.0 + ddt.norm()));
        CHECK(rep.status == EstimateStatus::Exact);
        CHECK(rep.residual("lyapunov") <=
              1e-10 * std::max(1.0, (rec.D * rec.D.transpose()).norm()));
    }
}

TEST_CASE("solve_linear handles a non-identity M0 (mismatched covariances)") {
    Rng rng(5);
    Matrix c_model = random_stable_drift(rng, 2);
    Matrix d_model(2, 2);
    d_model << 1.0, 0.2, 0.0, 0.8;
    const Matrix s_model = lyapunov_solve(c_model, d_model * d_model.transpose());

    Matrix c_data = random_stable_drift(rng, 2);
    const Matrix s_data = lyapunov_solve(c_data, Matrix::Identity(2, 2));

    // exact response reads of the model against data normalization
    Matrix s_data_inv = s_data.ldlt().solve(Matrix::Identity(2, 2));
    Matrix m0 = s_model * s_data_inv;
    Matrix m1 = c_model * s_model * s_data_inv;
    EstimationReport rep = solve_linear(m0, m1, s_data);
    REQUIRE(rep.recovered.has_value());
    CHECK((rep.recovered->linear().C - c_model).norm() < 1e-9 * (1.0 + c_model.norm()));
    Matrix rddt = rep.recovered->linear().D * rep.recovered->linear().D.transpose();
    CHECK((rddt - d_model * d_model.transpose()).norm() < 1e-9);
}

TEST_CASE("solve_linear rejects singular M0 and flags indefinite diffusion") {
    CHECK_THROWS_AS(solve_linear(Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                                 Matrix::Identity(2, 2)),
                    DegenerateSystemError);

    // M1 implying positive drift eigenvalues makes -CS - SC^T indefinite
    Matrix m1 = Matrix::Identity(2, 2);
    EstimationReport rep = solve_linear(Matrix::Identity(2, 2), m1, Matrix::Identity(2, 2));
    CHECK(rep.status == EstimateStatus::Flagged);
}

TEST_CASE("solve_linear from a simulated 1-d OU trajectory") {
    Matrix c(1, 1), d(1, 1);
    c << -1.0;
    d << std::sqrt(2.0);
    ModelSpec spec{LinearModel(c, d)};

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 10'000'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 100'000;
    cfg.seed = 606;
    Trajectory traj = integrate(spec, cfg);

    std::vector<double> lags{0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06};
    ResponseCurve curve = estimate_response(traj, Observable{ObservableKind::Identity},
                                            spec, lags);
    const Matrix m0 = curve.values[0];
    const Matrix m1 = finite_difference_derivative(curve, 1, 0.0).value;
    const double mean = traj.states.col(0).mean();
    Matrix s_data(1, 1);
    s_data << traj.states.col(0).array().square().mean() - mean * mean;

    EstimationReport rep = solve_linear(m0, m1, s_data);
    REQUIRE(rep.recovered.has_value());
    const double c_hat = rep.recovered->linear().C(0, 0);
    const double d2_hat = std::pow(rep.recovered->linear().D(0, 0), 2);
    CHECK(c_hat > -1.05);
    CHECK(c_hat < -0.95);
    CHECK(d2_hat > 1.9);
    CHECK(d2_hat < 2.1);
}

TEST_CASE("solve_linear from a simulated 2-d trajectory") {
    Matrix c(2, 2);
    c << -1, 1, 0, -2;
    ModelSpec spec{LinearModel(c, Matrix::Identity(2, 2))};

    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 5'000'000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 100'000;
    cfg.seed = 607;
    Trajectory traj = integrate(spec, cfg);

    std::vector<double> lags{0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06};
    ResponseCurve curve = estimate_response(traj, Observable{ObservableKind::Identity},
                                            spec, lags);
    Matrix centered = traj.states.rowwise() - traj.states.colwise().mean();
    Matrix s_data = centered.transpose() * centered / static_cast<double>(traj.rows());

    EstimationReport rep = solve_linear(curve.values[0],
                                        finite_difference_derivative(curve, 1, 0.0).value,
                                        s_data);
    REQUIRE(rep.recovered.has_value());
    CHECK((rep.recovered->linear().C - c).norm() / c.norm() <= 0.05);
}

TEST_CASE("solve_triad analytic round trip") {
    TriadModel truth = TriadModel::reference();
    TriadMStats ms = triad_M0_M1_M2(truth);
    Matrix q1 = triad_quadratic_response_slope(truth);

    EstimationReport rep = solve_triad(ms.M0, ms.M1, ms.M2, q1, truth.sigma_eq_sq());
    REQUIRE(rep.recovered.has_value());
    const TriadModel& rec = rep.recovered->triad();
    CHECK(std::abs(rec.B1 - 0.5) < 1e-10);
    CHECK(std::abs(rec.B2 - 1.0) < 1e-10);
    CHECK(std::abs(rec.B3() - (-1.5)) < 1e-10);
    CHECK((rec.L - truth.L).norm() < 1e-10);
    CHECK((rec.Lambda - truth.Lambda).norm() < 1e-10);
    CHECK(std::abs(rec.sigma - 0.2) < 1e-10);
    CHECK(rep.status == EstimateStatus::Exact);
    CHECK(std::abs(rep.residual("sum_B")) < 1e-12);

    // negated coefficients are recovered with their signs
    TriadModel flipped(-0.5, -1.0, truth.L, truth.Lambda, truth.sigma);
    TriadMStats msf = triad_M0_M1_M2(flipped);
    Matrix q1f = triad_quadratic_response_slope(flipped);
    CHECK((msf.M2 - ms.M2).norm() == 0.0);  // mean response cannot tell them apart
    EstimationReport repf = solve_triad(msf.M0, msf.M1, msf.M2, q1f, truth.sigma_eq_sq());
    REQUIRE(repf.recovered.has_value());
    CHECK(std::abs(repf.recovered->triad().B1 - (-0.5)) < 1e-10);
    CHECK(std::abs(repf.recovered->triad().B2 - (-1.0)) < 1e-10);
}

TEST_CASE("solve_triad flags inconsistent or invalid inputs") {
    TriadModel truth = TriadModel::reference();
    TriadMStats ms = triad_M0_M1_M2(truth);
    Matrix q1 = triad_quadratic_response_slope(truth);

    SUBCASE("anti-dissipative M1 cannot give an SPD Lambda") {
        EstimationReport rep = solve_triad(ms.M0, -ms.M1, ms.M2, q1, truth.sigma_eq_sq());
        CHECK(rep.status == EstimateStatus::Flagged);
        CHECK_FALSE(rep.recovered.has_value());
    }
    SUBCASE("corrupted M2 fails the cross-check") {
        Matrix bad_m2 = ms.M2 + 0.05 * Matrix::Identity(3, 3);
        EstimationReport rep = solve_triad(ms.M0, ms.M1, bad_m2, q1, truth.sigma_eq_sq());
        CHECK(rep.status == EstimateStatus::Flagged);
    }
    SUBCASE("anisotropic M0 is flagged") {
        Matrix bad_m0 = Matrix::Identity(3, 3);
        bad_m0(0, 0) = 1.5;
        EstimationReport rep = solve_triad(bad_m0, ms.M1, ms.M2, q1, truth.sigma_eq_sq());
        CHECK(rep.status == EstimateStatus::Flagged);
    }
}

TEST_CASE("whitening of response statistics") {
    SUBCASE("identity covariance is a no-op") {
        Matrix m(2, 2);
        m << 1, 2, 3, 4;
        auto out = scale_equilibrium({m}, Matrix::Identity(2, 2));
        CHECK((out[0] - m).norm() < 1e-14);
    }
    SUBCASE("lag-0 response of a self-consistent model stays the identity") {
        Rng rng(9);
        Matrix c = random_stable_drift(rng, 3);
        Matrix s = lyapunov_solve(c, Matrix::Identity(3, 3));
        Matrix m0 = s * s.ldlt().solve(Matrix::Identity(3, 3));  // = I analytically
        auto out = scale_equilibrium({m0}, s);
        CHECK((out[0] - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("similarity transform preserves the spectrum") {
        Rng rng(13);
        Matrix m(3, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = rng.normal();
        Matrix cov(3, 3);
        cov << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
        auto out = scale_equilibrium({m}, cov);
        Eigen::EigenSolver<Matrix> e1(m), e2(out[0]);
        Vector s1 = e1.eigenvalues().real(), s2 = e2.eigenvalues().real();
        std::sort(s1.data(), s1.data() + 3);
        std::sort(s2.data(), s2.data() + 3);
        CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("singular covariance is rejected") {
        CHECK_THROWS_AS(scale_equilibrium({Matrix::Identity(2, 2)}, Matrix::Zero(2, 2)),
                        DegenerateSystemError);
    }
}

TEST_CASE("whitening raises the quadratic-term scale by 1/sigma_eq^2") {
    // the B^2 summand of the second derivative carries sigma_eq^2; with the
    // equilibrium rescaled to unit covariance the same coefficients carry 1
    TriadModel tiny = TriadModel::reference();  // sigma_eq^2 = 0.02
    TriadModel unit(tiny.B1, tiny.B2, tiny.L, tiny.Lambda, std::sqrt(2.0));  // sigma_eq^2 = 1

    const Matrix c = tiny.L - tiny.Lambda;
    const Matrix summand_tiny = c * c - triad_M0_M1_M2(tiny).M2;
    const Matrix summand_unit = c * c - triad_M0_M1_M2(unit).M2;
    for (int i = 0; i < 3; ++i) {
        const double ratio = summand_unit(i, i) / summand_tiny(i, i);
        CHECK(std::abs(ratio - 1.0 / tiny.sigma_eq_sq()) < 1e-9 * ratio);
    }
}

TEST_CASE("solve_langevin via the M2 route on quadrature targets") {
    LangevinModel truth(0.2, 0.5, 1.0, 2.0, 1.0);
    LangevinEqMoments exact = langevin_moments_quadrature(truth);

    LangevinTargets t;
    t.M0 = 1.0;
    t.M1 = -truth.gamma;
    t.se_M0 = 0.005;
    t.se_M1 = 0.005;
    t.M2 = truth.gamma * truth.gamma - exact.e_upp;
    t.se_M2 = 0.01;
    t.e_x_data = exact.e_x;
    t.var_x_data = exact.var_x;
    t.se_e_x_data = 0.05;
    t.se_var_x_data = 0.5;
    t.kBT_data = 1.0;

    LangevinSolveConfig cfg;
    cfg.route = LangevinRoute::M2;
    cfg.epsilon_init = 0.3;   // deliberately off
    cfg.seed = 99173;
    cfg.inner_sim.n_steps = 0;  // defaults
    cfg.n_threads = 2;

    EstimationReport rep = solve_langevin(t, cfg);
    REQUIRE(rep.recovered.has_value());
    const LangevinModel& rec = rep.recovered->langevin();
    CHECK(std::abs(rec.kBT - 1.0) < 1e-12);
    CHECK(std::abs(rec.gamma - 0.5) < 1e-12);
    CHECK(std::abs(rec.epsilon - 0.2) <
          std::max(3.0 * rep.info_value("se_epsilon"), 0.03));
    CHECK(std::abs(rec.a - 2.0) < std::max(3.0 * rep.info_value("se_a"), 0.1));
    CHECK(std::abs(rec.x0 - 1.0) < std::max(3.0 * rep.info_value("se_x0"), 0.15));
    CHECK(rep.info_value("inner_evaluations") >= 5);
}

TEST_CASE("solve_langevin reports a failed bracket") {
    LangevinTargets t;
    t.M0 = 1.0;
    t.M1 = -0.5;
    t.M2 = 10.0;  // unreachable: gamma^2 - E[U''] is far below this
    t.e_x_data = 10.0;
    t.var_x_data = 90.0;
    t.kBT_data = 1.0;

    LangevinSolveConfig cfg;
    cfg.route = LangevinRoute::M2;
    cfg.epsilon_init = 0.2;
    cfg.probes = 3;
    cfg.inner_sim.dt = 5e-3;
    cfg.inner_sim.n_steps = 200'000;
    cfg.inner_sim.burn_in_steps = 5'000;
    cfg.inner_sim.n_chains = 1;
    CHECK_THROWS_AS(solve_langevin(t, cfg), BracketError);
}

TEST_CASE("solve_langevin validates its inputs") {
    LangevinTargets t;
    t.M0 = 1.0;
    t.M1 = 0.5;  // must be negative
    CHECK_THROWS_AS(solve_langevin(t, LangevinSolveConfig{}), std::invalid_argument);
}
