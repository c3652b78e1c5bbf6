#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdtinfer/io.hpp"
#include "fdtinfer/rng.hpp"

#include <cstdio>
#include <filesystem>

using namespace fdtinfer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("fdtinfer_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("matrix json round trip is row-major") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    json j = matrix_to_json(m);
    CHECK(j[0][0] == 1.0);
    CHECK(j[0][2] == 3.0);
    CHECK(j[1][0] == 4.0);
    CHECK((matrix_from_json(j) - m).norm() == 0.0);
    CHECK_THROWS_AS(matrix_from_json(json::array()), std::invalid_argument);
}

TEST_CASE("model specs round trip through json") {
    ModelSpec lin{LinearModel(-Matrix::Identity(2, 2), Matrix::Identity(2, 2))};
    ModelSpec two = model_from_json(model_to_json(lin));
    CHECK(two.is_linear());
    CHECK((two.linear().C - lin.linear().C).norm() == 0.0);

    ModelSpec triad{TriadModel::reference()};
    ModelSpec t2 = model_from_json(model_to_json(triad));
    CHECK(t2.triad().B1 == 0.5);
    CHECK(t2.triad().B3() == -1.5);
    CHECK((t2.triad().Lambda - triad.triad().Lambda).norm() == 0.0);

    ModelSpec lang{LangevinModel(0.2, 0.5, 1.0, 1.0, 0.0)};
    ModelSpec l2 = model_from_json(model_to_json(lang));
    CHECK(l2.langevin().epsilon == 0.2);

    CHECK(model_hash(lin) != model_hash(triad));
    CHECK(model_hash(lin) == model_hash(two));

    json bad = model_to_json(triad);
    bad.erase("sigma");
    CHECK_THROWS_WITH_AS(model_from_json(bad), doctest::Contains("sigma"),
                         std::invalid_argument);
    bad["family"] = "pendulum";
    CHECK_THROWS_AS(model_from_json(bad), std::invalid_argument);
}

TEST_CASE("invalid parameters are rejected on load") {
    json j = model_to_json(ModelSpec{TriadModel::reference()});
    j["L"][0][1] = 2.0;  // breaks skew symmetry
    CHECK_THROWS_AS(model_from_json(j), std::invalid_argument);
}

TEST_CASE("sim config round trip and defaults") {
    SimConfig cfg;
    cfg.dt = 2e-4;
    cfg.n_steps = 1000;
    cfg.subsample_stride = 5;
    cfg.seed = 12345;
    cfg.n_chains = 4;
    json j = sim_config_to_json(cfg);
    CHECK(j["initial_state"] == "equilibrium-draw");
    SimConfig back = sim_config_from_json(j);
    CHECK(back.dt == cfg.dt);
    CHECK(back.seed == cfg.seed);
    CHECK_FALSE(back.initial_state.has_value());

    Vector x0(2);
    x0 << 1.0, -0.5;
    cfg.initial_state = x0;
    SimConfig back2 = sim_config_from_json(sim_config_to_json(cfg));
    REQUIRE(back2.initial_state.has_value());
    CHECK((*back2.initial_state - x0).norm() == 0.0);

    json missing;
    missing["dt"] = 0.1;
    CHECK_THROWS_WITH_AS(sim_config_from_json(missing), doctest::Contains("n_steps"),
                         std::invalid_argument);
}

TEST_CASE("trajectory binary round trip") {
    TempDir tmp;
    ModelSpec spec{TriadModel::reference()};
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.n_steps = 5000;
    cfg.subsample_stride = 5;
    cfg.burn_in_steps = 500;
    cfg.seed = 22;
    Trajectory traj = integrate(spec, cfg);

    save_trajectory(traj, spec, tmp.path / "run");
    CHECK(fs::exists(tmp.path / "run.bin"));
    CHECK(fs::exists(tmp.path / "run.meta.json"));

    Trajectory back = load_trajectory(tmp.path / "run");
    CHECK(back.states == traj.states);
    CHECK(back.dt_effective == traj.dt_effective);
    CHECK(back.model_family == "triad");
    CHECK(back.config.seed == cfg.seed);

    save_trajectory_csv(traj, tmp.path / "run.csv");
    CHECK(fs::file_size(tmp.path / "run.csv") > 0);
}

TEST_CASE("curve round trips through json and csv") {
    Rng rng(4);
    ResponseCurve curve;
    curve.n_samples = 1000;
    for (int i = 0; i < 6; ++i) {
        curve.times.push_back(0.1 * i);
        Matrix v(2, 2), s(2, 2);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                v(r, c) = rng.normal();
                s(r, c) = 0.01 * rng.uniform();
            }
        curve.values.push_back(v);
        curve.stderrs.push_back(s);
    }

    ResponseCurve jback = curve_from_json(curve_to_json(curve));
    CHECK(jback.times == curve.times);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK((jback.values[i] - curve.values[i]).norm() == 0.0);
    }

    TempDir tmp;
    save_curve_csv(curve, tmp.path / "curve.csv");
    ResponseCurve cback = load_curve_csv(tmp.path / "curve.csv");
    REQUIRE(cback.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK((cback.values[i] - curve.values[i]).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((cback.stderrs[i] - curve.stderrs[i]).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(cback.n_samples == curve.n_samples);
}

TEST_CASE("approximant and essential stats serialize") {
    std::vector<Matrix> a{Matrix::Identity(2, 2), 0.5 * Matrix::Ones(2, 2)};
    std::vector<Matrix> b{-Matrix::Identity(2, 2), -0.25 * Matrix::Identity(2, 2)};
    RationalApproximant g(a, b);
    RationalApproximant back = approximant_from_json(approximant_to_json(g));
    CHECK(back.m == 2);
    CHECK(back.q == 2);
    CHECK((back.eval(1.0) - g.eval(1.0)).norm() == 0.0);

    EssentialStats stats = derivative_statistics(g, {0.0, 1.0}, {0, 1});
    EssentialStats sback = essential_stats_from_json(essential_stats_to_json(stats));
    CHECK(sback.entries.size() == stats.entries.size());
    CHECK(sback.find(1, 1.0) != nullptr);
}

TEST_CASE("estimation report serializes with status and residuals") {
    TriadModel truth = TriadModel::reference();
    TriadMStats ms = triad_M0_M1_M2(truth);
    EstimationReport rep = solve_triad(ms.M0, ms.M1, ms.M2,
                                       triad_quadratic_response_slope(truth),
                                       truth.sigma_eq_sq());
    json j = estimation_report_to_json(rep);
    CHECK(j["status"] == "exact");
    CHECK(j.contains("recovered"));
    CHECK(j["residuals"].contains("sum_B"));
    ModelSpec rec = model_from_json(j["recovered"]);
    CHECK(rec.is_triad());
}
