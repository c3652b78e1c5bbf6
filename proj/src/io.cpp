#include "fdtinfer/io.hpp"

#include "fdtinfer/errors.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdtinfer {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw std::invalid_argument("matrix_from_json: expected a nested array");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) {
            throw std::invalid_argument("matrix_from_json: ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

namespace {

template <typename T>
T require_field(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw std::invalid_argument(std::string("missing required field \"") + key + "\"");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("field \"") + key + "\" has the wrong type");
    }
}

Matrix require_matrix(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw std::invalid_argument(std::string("missing required field \"") + key + "\"");
    }
    return matrix_from_json(j.at(key));
}

}  // namespace

json model_to_json(const ModelSpec& model) {
    json j;
    j["family"] = model.family();
    if (model.is_linear()) {
        j["C"] = matrix_to_json(model.linear().C);
        j["D"] = matrix_to_json(model.linear().D);
    } else if (model.is_triad()) {
        const TriadModel& m = model.triad();
        j["B1"] = m.B1;
        j["B2"] = m.B2;
        j["L"] = matrix_to_json(m.L);
        j["Lambda"] = matrix_to_json(m.Lambda);
        j["sigma"] = m.sigma;
    } else {
        const LangevinModel& m = model.langevin();
        j["epsilon"] = m.epsilon;
        j["gamma"] = m.gamma;
        j["kBT"] = m.kBT;
        j["a"] = m.a;
        j["x0"] = m.x0;
    }
    return j;
}

ModelSpec model_from_json(const json& j) {
    const std::string family = require_field<std::string>(j, "family");
    if (family == "linear") {
        return ModelSpec(LinearModel(require_matrix(j, "C"), require_matrix(j, "D")));
    }
    if (family == "triad") {
        return ModelSpec(TriadModel(require_field<double>(j, "B1"),
                                    require_field<double>(j, "B2"),
                                    require_matrix(j, "L"), require_matrix(j, "Lambda"),
                                    require_field<double>(j, "sigma")));
    }
    if (family == "langevin") {
        return ModelSpec(LangevinModel(
            require_field<double>(j, "epsilon"), require_field<double>(j, "gamma"),
            require_field<double>(j, "kBT"), require_field<double>(j, "a"),
            require_field<double>(j, "x0")));
    }
    throw std::invalid_argument("model_from_json: unknown family \"" + family + "\"");
}

std::string model_hash(const ModelSpec& model) {
    const std::string text = model_to_json(model).dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

json sim_config_to_json(const SimConfig& cfg) {
    json j;
    j["dt"] = cfg.dt;
    j["n_steps"] = cfg.n_steps;
    j["subsample_stride"] = cfg.subsample_stride;
    j["burn_in_steps"] = cfg.burn_in_steps;
    j["seed"] = cfg.seed;
    j["n_chains"] = cfg.n_chains;
    j["n_threads"] = cfg.n_threads;
    if (cfg.initial_state) {
        json arr = json::array();
        for (Eigen::Index i = 0; i < cfg.initial_state->size(); ++i) {
            arr.push_back((*cfg.initial_state)(i));
        }
        j["initial_state"] = arr;
    } else {
        j["initial_state"] = "equilibrium-draw";
    }
    return j;
}

SimConfig sim_config_from_json(const json& j) {
    SimConfig cfg;
    cfg.dt = require_field<double>(j, "dt");
    cfg.n_steps = require_field<std::int64_t>(j, "n_steps");
    if (j.contains("subsample_stride")) cfg.subsample_stride = j["subsample_stride"].get<std::int64_t>();
    if (j.contains("burn_in_steps")) cfg.burn_in_steps = j["burn_in_steps"].get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("n_chains")) cfg.n_chains = j["n_chains"].get<int>();
    if (j.contains("n_threads")) cfg.n_threads = j["n_threads"].get<int>();
    if (j.contains("initial_state") && j["initial_state"].is_array()) {
        Vector x(j["initial_state"].size());
        for (std::size_t i = 0; i < j["initial_state"].size(); ++i) {
            x(static_cast<Eigen::Index>(i)) = j["initial_state"][i].get<double>();
        }
        cfg.initial_state = x;
    }
    return cfg;
}

json observable_to_json(const Observable& obs) {
    return json{{"kind", obs.name()}};
}

Observable observable_from_json(const json& j) {
    const std::string kind =
        j.is_string() ? j.get<std::string>() : require_field<std::string>(j, "kind");
    if (kind == "identity") return {ObservableKind::Identity};
    if (kind == "velocity") return {ObservableKind::Velocity};
    if (kind == "quadratic-triad") return {ObservableKind::QuadraticTriad};
    throw std::invalid_argument("observable_from_json: unknown kind \"" + kind + "\"");
}

void save_trajectory(const Trajectory& traj, const ModelSpec& model,
                     const std::filesystem::path& base) {
    std::filesystem::path bin = base;
    bin += ".bin";
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("save_trajectory: cannot open " + bin.string());
    // row-major float64 dump
    for (long r = 0; r < traj.rows(); ++r) {
        for (int c = 0; c < traj.dim(); ++c) {
            const double v = traj.states(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    }
    out.close();

    json meta;
    meta["rows"] = traj.rows();
    meta["cols"] = traj.dim();
    meta["dtype"] = "float64";
    meta["layout"] = "row-major";
    meta["dt_effective"] = traj.dt_effective;
    meta["model_family"] = traj.model_family;
    meta["model_hash"] = model_hash(model);
    meta["model"] = model_to_json(model);
    meta["sim_config"] = sim_config_to_json(traj.config);
    std::filesystem::path side = base;
    side += ".meta.json";
    save_json_file(meta, side);
}

Trajectory load_trajectory(const std::filesystem::path& base) {
    std::filesystem::path side = base;
    side += ".meta.json";
    const json meta = load_json_file(side);
    const long rows = require_field<long>(meta, "rows");
    const int cols = require_field<int>(meta, "cols");

    Trajectory traj;
    traj.dt_effective = require_field<double>(meta, "dt_effective");
    traj.model_family = require_field<std::string>(meta, "model_family");
    traj.config = sim_config_from_json(meta.at("sim_config"));
    traj.states.resize(rows, cols);

    std::filesystem::path bin = base;
    bin += ".bin";
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw std::runtime_error("load_trajectory: cannot open " + bin.string());
    for (long r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(double));
            if (!in) throw std::runtime_error("load_trajectory: truncated binary file");
            traj.states(r, c) = v;
        }
    }
    return traj;
}

void save_trajectory_csv(const Trajectory& traj, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("save_trajectory_csv: cannot open " + file.string());
    out << "t";
    for (int c = 0; c < traj.dim(); ++c) out << ",x" << (c + 1);
    out << "\n";
    out.precision(17);
    for (long r = 0; r < traj.rows(); ++r) {
        out << (static_cast<double>(r + 1) * traj.dt_effective);
        for (int c = 0; c < traj.dim(); ++c) out << "," << traj.states(r, c);
        out << "\n";
    }
}

json curve_to_json(const ResponseCurve& curve) {
    json j;
    j["times"] = curve.times;
    j["n_samples"] = curve.n_samples;
    j["q"] = curve.q();
    j["n"] = curve.n();
    json vals = json::array(), ses = json::array();
    for (const Matrix& v : curve.values) vals.push_back(matrix_to_json(v));
    for (const Matrix& s : curve.stderrs) ses.push_back(matrix_to_json(s));
    j["values"] = std::move(vals);
    j["stderrs"] = std::move(ses);
    return j;
}

ResponseCurve curve_from_json(const json& j) {
    ResponseCurve curve;
    curve.times = require_field<std::vector<double>>(j, "times");
    curve.n_samples = require_field<long>(j, "n_samples");
    for (const json& v : j.at("values")) curve.values.push_back(matrix_from_json(v));
    if (j.contains("stderrs")) {
        for (const json& s : j.at("stderrs")) curve.stderrs.push_back(matrix_from_json(s));
    }
    curve.validate();
    return curve;
}

void save_curve_csv(const ResponseCurve& curve, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("save_curve_csv: cannot open " + file.string());
    const int q = curve.q(), n = curve.n();
    out << "t";
    for (int r = 0; r < q; ++r)
        for (int c = 0; c < n; ++c) out << ",v_" << (r + 1) << "_" << (c + 1);
    for (int r = 0; r < q; ++r)
        for (int c = 0; c < n; ++c) out << ",se_" << (r + 1) << "_" << (c + 1);
    out << ",n_samples\n";
    out.precision(17);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << curve.times[i];
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < n; ++c) out << "," << curve.values[i](r, c);
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < n; ++c) {
                out << "," << (curve.stderrs.empty() ? 0.0 : curve.stderrs[i](r, c));
            }
        out << "," << curve.n_samples << "\n";
    }
}

ResponseCurve load_curve_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("load_curve_csv: cannot open " + file.string());
    std::string header;
    std::getline(in, header);
    // infer q, n from "v_r_c" column names
    int q = 0, n = 0;
    {
        std::stringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.rfind("v_", 0) == 0) {
                const auto us = col.find('_', 2);
                q = std::max(q, std::stoi(col.substr(2, us - 2)));
                n = std::max(n, std::stoi(col.substr(us + 1)));
            }
        }
    }
    if (q == 0 || n == 0) throw std::runtime_error("load_curve_csv: no value columns found");

    ResponseCurve curve;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(std::stod(cell));
        const std::size_t expected = 1 + 2 * static_cast<std::size_t>(q) * n + 1;
        if (cells.size() != expected) {
            throw std::runtime_error("load_curve_csv: malformed row");
        }
        curve.times.push_back(cells[0]);
        Matrix v(q, n), s(q, n);
        std::size_t at = 1;
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < n; ++c) v(r, c) = cells[at++];
        for (int r = 0; r < q; ++r)
            for (int c = 0; c < n; ++c) s(r, c) = cells[at++];
        curve.values.push_back(v);
        curve.stderrs.push_back(s);
        curve.n_samples = static_cast<long>(cells[at]);
    }
    curve.validate();
    return curve;
}

json essential_stats_to_json(const EssentialStats& stats) {
    json j;
    j["provenance"] = stats.provenance;
    json entries = json::array();
    for (const auto& e : stats.entries) {
        json je;
        je["order"] = e.order;
        je["time"] = e.time;
        je["value"] = matrix_to_json(e.value);
        if (e.stderr_est.size() > 0) je["stderr"] = matrix_to_json(e.stderr_est);
        je["method"] = e.method;
        if (!e.note.empty()) je["note"] = e.note;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    return j;
}

EssentialStats essential_stats_from_json(const json& j) {
    EssentialStats stats;
    stats.provenance = j.value("provenance", "");
    for (const json& je : j.at("entries")) {
        EssentialStatEntry e;
        e.order = require_field<int>(je, "order");
        e.time = require_field<double>(je, "time");
        e.value = require_matrix(je, "value");
        if (je.contains("stderr")) e.stderr_est = matrix_from_json(je["stderr"]);
        e.method = je.value("method", "");
        e.note = je.value("note", "");
        stats.add(std::move(e));
    }
    return stats;
}

json approximant_to_json(const RationalApproximant& g) {
    json j;
    j["m"] = g.m;
    j["q"] = g.q;
    json alphas = json::array(), betas = json::array();
    for (const Matrix& a : g.alphas) alphas.push_back(matrix_to_json(a));
    for (const Matrix& b : g.betas) betas.push_back(matrix_to_json(b));
    j["alphas"] = std::move(alphas);
    j["betas"] = std::move(betas);
    return j;
}

RationalApproximant approximant_from_json(const json& j) {
    std::vector<Matrix> alphas, betas;
    for (const json& a : j.at("alphas")) alphas.push_back(matrix_from_json(a));
    for (const json& b : j.at("betas")) betas.push_back(matrix_from_json(b));
    return RationalApproximant(std::move(alphas), std::move(betas));
}

json fit_report_to_json(const FitReport& report) {
    json j;
    j["objective"] = report.objective;
    j["rms"] = report.rms;
    j["iterations"] = report.iterations;
    j["converged"] = report.converged;
    j["stable"] = report.stable;
    j["stability_margin"] = report.stability_margin;
    j["lag0_zscore"] = report.lag0_zscore;
    j["lag0_within_2se"] = report.lag0_within_2se;
    j["trace"] = report.trace;
    j["grid"] = report.grid;
    j["init_policy"] = report.init_policy;
    j["message"] = report.message;
    return j;
}

json estimation_report_to_json(const EstimationReport& report) {
    json j;
    j["status"] = to_string(report.status);
    if (report.recovered) j["recovered"] = model_to_json(*report.recovered);
    json res = json::object(), info = json::object();
    for (const auto& [k, v] : report.residuals) res[k] = v;
    for (const auto& [k, v] : report.info) info[k] = v;
    j["residuals"] = std::move(res);
    j["info"] = std::move(info);
    j["inputs"] = essential_stats_to_json(report.inputs);
    j["diagnostics"] = report.diagnostics;
    return j;
}

json load_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("JSON parse error in " + file.string() + ": " + e.what());
    }
    return j;
}

void save_json_file(const json& j, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot open " + file.string());
    out << j.dump(2) << "\n";
}

}  // namespace fdtinfer
