// Python bindings for the core pipeline: model definitions, simulation,
// response estimation, rational fitting, and the parameter solvers.

#include "fdtinfer/errors.hpp"
#include "fdtinfer/estimate.hpp"
#include "fdtinfer/io.hpp"
#include "fdtinfer/rational.hpp"
#include "fdtinfer/response.hpp"
#include "fdtinfer/simulate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace fdtinfer;

namespace {

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null: return py::none();
        case json::value_t::boolean: return py::bool_(j.get<bool>());
        case json::value_t::number_integer: return py::int_(j.get<long long>());
        case json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
        case json::value_t::number_float: return py::float_(j.get<double>());
        case json::value_t::string: return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const json& v : j) out.append(json_to_py(v));
            return out;
        }
        case json::value_t::object: {
            py::dict out;
            for (auto it = j.begin(); it != j.end(); ++it) {
                out[py::str(it.key())] = json_to_py(it.value());
            }
            return out;
        }
        default: return py::none();
    }
}

Observable observable_by_name(const std::string& name) {
    return observable_from_json(json(name));
}

}  // namespace

PYBIND11_MODULE(fdtinfer, m) {
    m.doc() = "parameter estimation for ergodic SDEs from linear response statistics";

    py::class_<ModelSpec>(m, "ModelSpec")
        .def_static("linear",
                    [](const Matrix& c, const Matrix& d) {
                        return ModelSpec(LinearModel(c, d));
                    },
                    py::arg("C"), py::arg("D"))
        .def_static("triad",
                    [](double b1, double b2, const Matrix& l, const Matrix& lam,
                       double sigma) { return ModelSpec(TriadModel(b1, b2, l, lam, sigma)); },
                    py::arg("B1"), py::arg("B2"), py::arg("L"), py::arg("Lambda"),
                    py::arg("sigma"))
        .def_static("triad_reference", [] { return ModelSpec(TriadModel::reference()); })
        .def_static("langevin",
                    [](double eps, double gamma, double kbt, double a, double x0) {
                        return ModelSpec(LangevinModel(eps, gamma, kbt, a, x0));
                    },
                    py::arg("epsilon"), py::arg("gamma"), py::arg("kBT"), py::arg("a") = 1.0,
                    py::arg("x0") = 0.0)
        .def_static("from_json",
                    [](const std::string& text) { return model_from_json(json::parse(text)); })
        .def_property_readonly("family", &ModelSpec::family)
        .def_property_readonly("state_dim", &ModelSpec::state_dim)
        .def("to_json", [](const ModelSpec& mdl) { return model_to_json(mdl).dump(); })
        .def("__repr__", [](const ModelSpec& mdl) {
            return "<ModelSpec " + model_to_json(mdl).dump() + ">";
        });

    m.def("drift", &drift, py::arg("model"), py::arg("x"));
    m.def("diffusion", &diffusion, py::arg("model"));
    m.def("potential_derivative",
          [](const ModelSpec& mdl, double x, int order) {
              return potential_derivative(mdl.langevin(), x, order);
          },
          py::arg("model"), py::arg("x"), py::arg("order"));
    m.def("triad_m_stats",
          [](const ModelSpec& mdl) {
              TriadMStats s = triad_M0_M1_M2(mdl.triad());
              return py::make_tuple(s.M0, s.M1, s.M2);
          },
          py::arg("model"), "closed-form (M0, M1, M2) of the identity observable");
    m.def("triad_quadratic_response_slope",
          [](const ModelSpec& mdl) { return triad_quadratic_response_slope(mdl.triad()); },
          py::arg("model"));
    m.def("langevin_m_stats",
          [](const ModelSpec& mdl) {
              LangevinEqMoments mom = langevin_moments_quadrature(mdl.langevin());
              LangevinMStats s = langevin_m_stats(mdl.langevin(), mom);
              py::dict out;
              out["M0"] = s.M0;
              out["M1"] = s.M1;
              out["M2"] = s.M2;
              out["M3"] = s.M3;
              out["M4"] = s.M4;
              out["M5"] = s.M5;
              return out;
          },
          py::arg("model"),
          "response derivatives at t=0 with quadrature equilibrium moments");

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init([](double dt, long n_steps, long stride, long burn_in,
                         std::uint64_t seed, int n_chains, int n_threads) {
                 SimConfig cfg;
                 cfg.dt = dt;
                 cfg.n_steps = n_steps;
                 cfg.subsample_stride = stride;
                 cfg.burn_in_steps = burn_in;
                 cfg.seed = seed;
                 cfg.n_chains = n_chains;
                 cfg.n_threads = n_threads;
                 return cfg;
             }),
             py::arg("dt"), py::arg("n_steps"), py::arg("subsample_stride") = 1,
             py::arg("burn_in_steps") = -1, py::arg("seed") = 0, py::arg("n_chains") = 1,
             py::arg("n_threads") = 1)
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("n_steps", &SimConfig::n_steps)
        .def_readwrite("subsample_stride", &SimConfig::subsample_stride)
        .def_readwrite("seed", &SimConfig::seed);

    py::class_<Trajectory>(m, "Trajectory")
        .def_property_readonly("states",
                               [](const Trajectory& t) -> const Matrix& { return t.states; })
        .def_property_readonly("dt_effective",
                               [](const Trajectory& t) { return t.dt_effective; })
        .def_property_readonly("model_family",
                               [](const Trajectory& t) { return t.model_family; })
        .def("__len__", [](const Trajectory& t) { return t.rows(); });

    m.def("integrate", &integrate, py::arg("model"), py::arg("config"),
          "weak trapezoidal equilibrium trajectory",
          py::call_guard<py::gil_scoped_release>());
    m.def("ensemble", &ensemble, py::arg("model"), py::arg("config"),
          py::call_guard<py::gil_scoped_release>());
    m.def("euler_maruyama_oracle", &euler_maruyama_oracle, py::arg("model"),
          py::arg("config"), py::call_guard<py::gil_scoped_release>());

    py::class_<ResponseCurve>(m, "ResponseCurve")
        .def_property_readonly("times",
                               [](const ResponseCurve& c) { return c.times; })
        .def_property_readonly("values",
                               [](const ResponseCurve& c) { return c.values; })
        .def_property_readonly("stderrs",
                               [](const ResponseCurve& c) { return c.stderrs; })
        .def_property_readonly("n_samples",
                               [](const ResponseCurve& c) { return c.n_samples; })
        .def("entry_curve", &ResponseCurve::entry_curve, py::arg("row"), py::arg("col"));

    m.def("conjugate_variable", &conjugate_variable, py::arg("model"), py::arg("state"));
    m.def("estimate_response",
          [](const std::vector<Trajectory>& chains, const std::string& observable,
             const ModelSpec& model, const std::vector<double>& lags) {
              return estimate_response(chains, observable_by_name(observable), model, lags);
          },
          py::arg("trajectories"), py::arg("observable"), py::arg("model"), py::arg("lags"),
          py::call_guard<py::gil_scoped_release>());
    m.def("finite_difference_derivative",
          [](const ResponseCurve& c, int order, double anchor) {
              EssentialStatEntry e = finite_difference_derivative(c, order, anchor);
              return py::make_tuple(e.value, e.stderr_est);
          },
          py::arg("curve"), py::arg("order"), py::arg("anchor"));

    py::class_<RationalApproximant>(m, "RationalApproximant")
        .def(py::init<std::vector<Matrix>, std::vector<Matrix>>(), py::arg("alphas"),
             py::arg("betas"))
        .def_property_readonly("m", [](const RationalApproximant& g) { return g.m; })
        .def_property_readonly("alphas",
                               [](const RationalApproximant& g) { return g.alphas; })
        .def_property_readonly("betas",
                               [](const RationalApproximant& g) { return g.betas; })
        .def("__call__", &RationalApproximant::eval, py::arg("t"),
             py::arg("derivative_order") = 0)
        .def("eval", &RationalApproximant::eval, py::arg("t"),
             py::arg("derivative_order") = 0)
        .def("stability_margin", &RationalApproximant::stability_margin);

    m.def("pade_match_at_zero",
          [](const std::vector<Matrix>& moments) { return pade_match_at_zero(moments); },
          py::arg("moments"), "Pade matching from M_0..M_{2m-1} at t = 0");
    m.def("make_fit_grid", &make_fit_grid, py::arg("t_max"), py::arg("n_points"),
          py::arg("t_split"), py::arg("dt_eff"));
    m.def("least_squares_fit",
          [](const ResponseCurve& curve, int order, std::vector<double> weights) {
              FitOptions opts;
              opts.weights = std::move(weights);
              auto [g, rep] = least_squares_fit(curve, order, opts);
              return py::make_tuple(g, json_to_py(fit_report_to_json(rep)));
          },
          py::arg("curve"), py::arg("m"), py::arg("weights") = std::vector<double>{},
          py::call_guard<py::gil_scoped_release>());

    m.def("solve_linear",
          [](const Matrix& m0, const Matrix& m1, const Matrix& s_data) {
              return json_to_py(estimation_report_to_json(solve_linear(m0, m1, s_data)));
          },
          py::arg("M0"), py::arg("M1"), py::arg("S_data"));
    m.def("solve_triad",
          [](const Matrix& m0, const Matrix& m1, const Matrix& m2, const Matrix& q1,
             double sigma_eq_data_sq) {
              return json_to_py(estimation_report_to_json(
                  solve_triad(m0, m1, m2, q1, sigma_eq_data_sq)));
          },
          py::arg("M0"), py::arg("M1"), py::arg("M2"), py::arg("Q1"),
          py::arg("sigma_eq_data_sq"));
    m.def("scale_equilibrium", &scale_equilibrium, py::arg("stats"), py::arg("covariance"));

    py::register_exception<BlowupError>(m, "BlowupError", PyExc_RuntimeError);
    py::register_exception<BracketError>(m, "BracketError", PyExc_RuntimeError);
    py::register_exception<GridError>(m, "GridError", PyExc_ValueError);
    py::register_exception<SampleSizeError>(m, "SampleSizeError", PyExc_ValueError);
}
