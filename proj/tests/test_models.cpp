#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdtinfer/errors.hpp"
#include "fdtinfer/models.hpp"
#include "fdtinfer/rng.hpp"

#include <cmath>

using namespace fdtinfer;

namespace {

Matrix expected_triad_m1() {
    Matrix m(3, 3);
    m << -1.0, 0.5, -0.25,
         -1.5, -1.0, -1.5,
         -0.25, 0.5, -1.0;
    return m;
}

}  // namespace

TEST_CASE("drift of the three families") {
    ModelSpec lin{LinearModel(-Matrix::Identity(2, 2), Matrix::Identity(2, 2))};
    Vector x2(2);
    x2 << 1, 2;
    CHECK(drift(lin, x2).isApprox(-x2));

    ModelSpec triad{TriadModel::reference()};
    Vector ones = Vector::Ones(3);
    Vector d = drift(triad, ones);
    CHECK(std::abs(d(0) - (-0.25)) < 1e-14);
    CHECK(std::abs(d(1) - (-3.0)) < 1e-14);
    CHECK(std::abs(d(2) - (-2.25)) < 1e-14);

    LangevinModel lm(1.0, 0.5, 1.0, 1.0, 0.7);
    ModelSpec lang{lm};
    Vector xm(2);
    xm << lm.x0, 0.0;  // Morse minimum, zero velocity
    CHECK(drift(lang, xm).norm() < 1e-14);

    Vector wrong(3);
    wrong << 1, 2, 3;
    CHECK_THROWS_AS(drift(lin, wrong), std::invalid_argument);
}

TEST_CASE("diffusion matrices") {
    ModelSpec lin{LinearModel(-Matrix::Identity(2, 2), Matrix::Identity(2, 2))};
    CHECK(diffusion(lin).isApprox(Matrix::Identity(2, 2)));

    TriadModel tm = TriadModel::reference();
    Matrix root = diffusion(ModelSpec{tm});
    CHECK(((root / tm.sigma) * (root / tm.sigma) - tm.Lambda).cwiseAbs().maxCoeff() < 1e-12);

    ModelSpec lang{LangevinModel(1.0, 0.5, 1.0, 1.0, 0.0)};
    Matrix b = diffusion(lang);
    CHECK(b.rows() == 2);
    CHECK(b.cols() == 1);
    CHECK(b(0, 0) == 0.0);
    CHECK(std::abs(b(1, 0) - 1.0) < 1e-15);  // sqrt(2 * 0.5 * 1)
}

TEST_CASE("potential derivatives") {
    LangevinModel m(1.0, 0.5, 1.0, 1.0, 0.0);
    CHECK(std::abs(potential_derivative(m, 0.0, 0) - (-1.0)) < 1e-15);
    CHECK(std::abs(potential_derivative(m, 0.0, 1)) < 1e-15);

    LangevinModel m2(1.0, 0.5, 1.0, 2.0, 0.0);
    CHECK(std::abs(potential_derivative(m2, 0.0, 2) - 8.08) < 1e-12);

    CHECK_THROWS_AS(potential_derivative(m, 0.0, 5), std::invalid_argument);

    // chain-rule consistency against central differences
    LangevinModel m3(0.7, 0.5, 1.0, 1.3, -0.4);
    const double h = 1e-5;
    for (double x : {-0.5, 0.0, 0.8, 2.5}) {
        for (int ord = 1; ord <= 4; ++ord) {
            const double fd = (potential_derivative(m3, x + h, ord - 1) -
                               potential_derivative(m3, x - h, ord - 1)) /
                              (2 * h);
            const double an = potential_derivative(m3, x, ord);
            CHECK(std::abs(fd - an) < 1e-6 * (1.0 + std::abs(an)));
        }
    }
}

TEST_CASE("triad closed-form response statistics") {
    TriadModel tm = TriadModel::reference();
    TriadMStats s = triad_M0_M1_M2(tm);
    CHECK(s.M0.isApprox(Matrix::Identity(3, 3)));
    CHECK((s.M1 - expected_triad_m1()).cwiseAbs().maxCoeff() < 1e-14);

    const Matrix c = tm.L - tm.Lambda;
    Vector b2(3);
    b2 << 0.25, 1.0, 2.25;
    Matrix expected_m2 = c * c - 0.02 * Matrix(b2.asDiagonal());
    CHECK((s.M2 - expected_m2).cwiseAbs().maxCoeff() < 1e-14);

    TriadModel no_b(0.0, 0.0, tm.L, tm.Lambda, tm.sigma);
    CHECK((triad_M0_M1_M2(no_b).M2 - c * c).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("quadratic-observable slope") {
    TriadModel tm = TriadModel::reference();
    Matrix q1 = triad_quadratic_response_slope(tm);
    Vector expected(3);
    expected << -0.5, -1.0, 1.5;
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(q1(i, i) - 0.02 * expected(i)) < 1e-15);
        for (int j = 0; j < 3; ++j) {
            if (i != j) CHECK(q1(i, j) == 0.0);
        }
    }

    TriadModel zero_b(0.0, 0.0, tm.L, tm.Lambda, tm.sigma);
    CHECK(triad_quadratic_response_slope(zero_b).norm() == 0.0);

    TriadModel pm(1.0, -1.0, tm.L, tm.Lambda, tm.sigma);
    Matrix q2 = triad_quadratic_response_slope(pm);
    const double s2 = pm.sigma_eq_sq();
    CHECK(std::abs(q2(0, 0) - s2 * (-1.0)) < 1e-15);
    CHECK(std::abs(q2(1, 1) - s2 * (1.0)) < 1e-15);
    CHECK(std::abs(q2(2, 2)) < 1e-15);
}

TEST_CASE("non-identifiability of B signs from the mean response") {
    TriadModel plus = TriadModel::reference();
    TriadModel minus(-plus.B1, -plus.B2, plus.L, plus.Lambda, plus.sigma);
    TriadMStats sp = triad_M0_M1_M2(plus);
    TriadMStats sm = triad_M0_M1_M2(minus);
    CHECK((sp.M0 - sm.M0).norm() == 0.0);
    CHECK((sp.M1 - sm.M1).norm() == 0.0);
    CHECK((sp.M2 - sm.M2).norm() == 0.0);
    // while the quadratic-observable slope flips sign
    CHECK((triad_quadratic_response_slope(plus) +
           triad_quadratic_response_slope(minus)).norm() == 0.0);
}

TEST_CASE("M1 decomposes exactly into L and Lambda") {
    TriadModel tm = TriadModel::reference();
    Matrix m1 = triad_M0_M1_M2(tm).M1;
    auto parts = sym_skew_split(m1);
    CHECK((parts.skew - tm.L).cwiseAbs().maxCoeff() == 0.0);
    CHECK((-parts.sym - tm.Lambda).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("triad bilinear term conserves energy and is divergence-free") {
    Rng rng(99);
    TriadModel tm = TriadModel::reference();
    ModelSpec spec{tm};
    const Matrix lin_part = tm.L - tm.Lambda;
    for (int trial = 0; trial < 1000; ++trial) {
        Vector x(3);
        for (int i = 0; i < 3; ++i) x(i) = 3.0 * rng.normal();
        Vector b = drift(spec, x) - lin_part * x;
        const double norm3 = std::pow(x.norm(), 3);
        CHECK(std::abs(x.dot(b)) <= 1e-12 * std::max(1.0, norm3));
        CHECK(std::abs(x.dot(tm.L * x)) <= 1e-12 * std::max(1.0, x.squaredNorm()));
    }
    // finite-difference divergence of B(x, x)
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        Vector x(3);
        for (int i = 0; i < 3; ++i) x(i) = 2.0 * rng.normal();
        double div = 0.0;
        for (int i = 0; i < 3; ++i) {
            Vector xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            Vector bp = drift(spec, xp) - lin_part * xp;
            Vector bm = drift(spec, xm) - lin_part * xm;
            div += (bp(i) - bm(i)) / (2 * h);
        }
        CHECK(std::abs(div) < 1e-6);
    }
}

TEST_CASE("drift and diffusion dimensions are consistent across random models") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform() * 3.0);
        const int d = 1 + static_cast<int>(rng.uniform() * 3.0);
        Matrix a(n, n), dd(n, d);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) a(r, c) = rng.normal();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) dd(r, c) = rng.normal();
        a -= (spectral_abscissa(a) + 0.5) * Matrix::Identity(n, n);
        ModelSpec spec{LinearModel(a, dd)};
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = rng.normal();
        CHECK(drift(spec, x).size() == n);
        CHECK(diffusion(spec).rows() == n);
        CHECK(diffusion(spec).cols() == d);
    }
}

TEST_CASE("langevin response derivatives at t=0") {
    LangevinEqMoments quad = langevin_moments_quadrature(0.2, 1.0);
    LangevinModel m05(0.2, 0.5, 1.0, 1.0, 0.0);
    LangevinMStats s = langevin_m_stats(m05, quad);
    CHECK(s.M0 == 1.0);
    CHECK(std::abs(s.M1 - (-0.5)) < 1e-14);

    LangevinModel m01(0.2, 0.1, 1.0, 1.0, 0.0);
    CHECK(std::abs(langevin_m_stats(m01, quad).M1 - (-0.1)) < 1e-14);

    // formal free-particle limit: all potential moments vanish
    LangevinEqMoments free;
    free.e_upp = free.e_upp_sq = free.e_up_uppp = free.e_u4 = 0.0;
    LangevinModel unit_gamma(1.0, 1.0, 1.0, 1.0, 0.0);
    LangevinMStats f = langevin_m_stats(unit_gamma, free);
    CHECK(f.M2 == 1.0);
    CHECK(f.M3 == -1.0);
    CHECK(f.M4 == 1.0);
    CHECK(f.M5 == -1.0);

    LangevinEqMoments incomplete;
    CHECK_THROWS_AS(langevin_m_stats(m05, incomplete), std::invalid_argument);
}

TEST_CASE("quadrature moments match an independent integration") {
    // reference values from an adaptive-quadrature computation of the same
    // integrals (epsilon = 0.2, kBT = 1)
    LangevinEqMoments m = langevin_moments_quadrature(0.2, 1.0);
    CHECK(std::abs(m.e_upp - 0.163869) < 2e-5);
    CHECK(std::abs(m.e_upp_sq - 0.950736) < 2e-4);
    CHECK(std::abs(m.e_up_uppp - 0.839030) < 2e-4);
    CHECK(std::abs(m.e_u4 - 0.839030) < 2e-4);
    CHECK(std::abs(m.e_x - 11.668939) < 2e-3);
    CHECK(std::abs(m.var_x - 95.477876) < 2e-2);
    // integration-by-parts identity E[U' U'''] = kBT E[U'''']
    CHECK(std::abs(m.e_up_uppp - 1.0 * m.e_u4) < 1e-6 * (1.0 + std::abs(m.e_u4)));

    // Table-style check: the derivative formulas at these moments
    LangevinModel m05(0.2, 0.5, 1.0, 1.0, 0.0);
    LangevinMStats s = langevin_m_stats(m05, m);
    CHECK(std::abs(s.M2 - 0.0861) < 5e-4);
    CHECK(std::abs(s.M3 - 0.0389) < 5e-4);
    LangevinModel m01(0.2, 0.1, 1.0, 1.0, 0.0);
    LangevinMStats s2 = langevin_m_stats(m01, m);
    CHECK(std::abs(s2.M2 - (-0.1539)) < 5e-4);
    CHECK(std::abs(s2.M3 - 0.0318) < 5e-4);
}

TEST_CASE("rescaled quadrature moments for general (a, x0)") {
    LangevinModel general(0.2, 0.5, 1.0, 2.0, 1.0);
    LangevinEqMoments unit = langevin_moments_quadrature(0.2, 1.0);
    LangevinEqMoments m = langevin_moments_quadrature(general);
    CHECK(std::abs(m.e_x - (1.0 + unit.e_x / 2.0)) < 1e-12);
    CHECK(std::abs(m.var_x - unit.var_x / 4.0) < 1e-12);
    CHECK(std::abs(m.e_upp - 4.0 * unit.e_upp) < 1e-12);
    CHECK(std::abs(m.e_u4 - 16.0 * unit.e_u4) < 1e-12);
}

TEST_CASE("model invariants are enforced") {
    Matrix l = TriadModel::reference().L;
    Matrix lam = TriadModel::reference().Lambda;

    Matrix not_skew = l;
    not_skew(0, 1) = 2.0;  // breaks L + L^T = 0
    CHECK_THROWS_AS(TriadModel(0.5, 1.0, not_skew, lam, 0.2), std::invalid_argument);

    Matrix not_spd = lam;
    not_spd(0, 0) = -1.0;
    not_spd(0, 0) = -1.0;
    CHECK_THROWS_AS(TriadModel(0.5, 1.0, l, not_spd, 0.2), std::invalid_argument);

    CHECK_THROWS_AS(TriadModel(0.5, 1.0, l, lam, -0.2), std::invalid_argument);
    CHECK_THROWS_AS(LangevinModel(-1.0, 0.5, 1.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(LangevinModel(1.0, 0.5, 1.0, 0.0, 0.0), std::invalid_argument);

    // unstable drift is not ergodic
    CHECK_THROWS_AS(LinearModel(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                    std::invalid_argument);

    // B3 is derived, so the energy constraint holds by construction
    TriadModel tm(0.3, -1.1, l, lam, 0.2);
    CHECK(tm.B1 + tm.B2 + tm.B3() == 0.0);
}

TEST_CASE("observable validation") {
    ModelSpec triad{TriadModel::reference()};
    ModelSpec lang{LangevinModel(1.0, 0.5, 1.0, 1.0, 0.0)};

    Observable vel{ObservableKind::Velocity};
    CHECK_THROWS_AS(vel.validate_for(triad), std::invalid_argument);
    CHECK_NOTHROW(vel.validate_for(lang));

    Observable quad{ObservableKind::QuadraticTriad};
    CHECK_NOTHROW(quad.validate_for(triad));
    CHECK_THROWS_AS(quad.validate_for(lang), std::invalid_argument);

    Vector s(3);
    s << 2, 3, 5;
    Vector a = quad.apply(s);
    CHECK(a(0) == 15.0);
    CHECK(a(1) == 10.0);
    CHECK(a(2) == 6.0);

    CHECK(Observable{ObservableKind::Identity}.output_dim(3) == 3);
    CHECK(vel.output_dim(2) == 2);
}

TEST_CASE("langevin potential is confining") {
    LangevinModel m = LangevinModel::reference();
    const double u_min = potential_derivative(m, m.x0, 0);
    for (double x : {-6.0, -3.0, 40.0, 120.0, 400.0}) {
        CHECK(potential_derivative(m, x, 0) > u_min);
    }
    CHECK(potential_derivative(m, -30.0, 0) > 1e3);
    CHECK(potential_derivative(m, 1e4, 0) > 1e3);
}
