#pragma once

#include "distobs/sim.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace distobs {

using nlohmann::json;

/// Raised on malformed configuration input; the message names the offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulationSettings {
    int horizon = 500;
    double tol = 1e-4;       // convergence threshold relative to the initial error
    std::uint64_t seed = 1;  // drives the initial-state sample
    InputSignal input;
    bool wide_trace = false;  // also dump every state entry per column
};

/// Everything one run needs: the instance, the strategy choice, design
/// overrides, and the simulation block.
struct RunConfig {
    SystemModel system;
    AgentOutputs outputs;
    SensorNetwork net;
    int strategy = 0;  // 1, 2, or 0 for auto
    GainPolicy gain_policy;
    std::vector<LuenbergerPolicy> luenberger;  // per agent
    SimulationSettings simulation;
    double structural_zero_tol = 0.0;
    double rank_tol = 1e-9;
};

namespace detail {

inline Matrix parse_matrix(const json& j, const std::string& where, int expect_cols = -1) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(where + ": expected a row-major array of arrays");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    if (expect_cols >= 0 && cols != expect_cols)
        throw ConfigError(where + ": expected " + std::to_string(expect_cols) + " columns, got " +
                          std::to_string(cols));
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
            throw ConfigError(where + ": ragged rows");
        for (int c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ConfigError(where + ": non-numeric entry");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

inline Vector parse_vector(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(where + ": non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline InputSignal parse_input(const json& j) {
    InputSignal sig;
    if (j.is_null()) return sig;
    const std::string kind = j.value("kind", "zero");
    if (kind == "zero") return sig;
    if (kind == "step") {
        sig.kind = InputSignal::Step{parse_vector(j.at("value"), "simulation.input.value")};
    } else if (kind == "sinusoid") {
        sig.kind = InputSignal::Sinusoid{parse_vector(j.at("amplitude"), "simulation.input.amplitude"),
                                         parse_vector(j.at("frequency"), "simulation.input.frequency"),
                                         parse_vector(j.at("phase"), "simulation.input.phase")};
    } else if (kind == "samples") {
        sig.kind = InputSignal::Samples{parse_matrix(j.at("values"), "simulation.input.values")};
    } else {
        throw ConfigError("simulation.input.kind: unknown kind '" + kind + "'");
    }
    return sig;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
    RunConfig cfg;
    try {
        const json& sys = j.at("system");
        if (!sys.contains("eigens") || !sys["eigens"].is_array() || sys["eigens"].empty())
            throw ConfigError("system.eigens: expected a nonempty array");
        for (const json& e : sys["eigens"]) {
            EigenBlock eb;
            if (!e.contains("lambda") || !e["lambda"].is_number())
                throw ConfigError("system.eigens[].lambda: expected a real number");
            eb.lambda = e["lambda"].get<double>();
            if (!e.contains("dims") || !e["dims"].is_array() || e["dims"].empty())
                throw ConfigError("system.eigens[].dims: expected a nonempty array of integers");
            for (const json& d : e["dims"]) {
                if (!d.is_number_integer() || d.get<int>() < 1)
                    throw ConfigError("system.eigens[].dims: entries must be positive integers");
                eb.miniblock_dims.push_back(d.get<int>());
            }
            cfg.system.jordan.eigens.push_back(std::move(eb));
        }
        const int n = cfg.system.jordan.total_dim();
        cfg.system.B = sys.contains("B") ? detail::parse_matrix(sys["B"], "system.B") : Matrix(n, 0);

        if (!j.contains("agents") || !j["agents"].is_array() || j["agents"].empty())
            throw ConfigError("agents: expected a nonempty array");
        for (std::size_t i = 0; i < j["agents"].size(); ++i)
            cfg.outputs.C.push_back(
                detail::parse_matrix(j["agents"][i].at("C"), "agents[" + std::to_string(i + 1) + "].C"));

        const json& net = j.at("network");
        cfg.net.directed = net.value("directed", true);
        cfg.net.adjacency = detail::parse_matrix(net.at("adjacency"), "network.adjacency");

        if (j.contains("design")) {
            const json& design = j["design"];
            if (design.contains("strategy")) {
                const json& s = design["strategy"];
                if (s.is_string() && s.get<std::string>() == "auto") cfg.strategy = 0;
                else if (s.is_number_integer() && (s.get<int>() == 1 || s.get<int>() == 2))
                    cfg.strategy = s.get<int>();
                else throw ConfigError("design.strategy: expected 1, 2, or \"auto\"");
            }
            if (design.contains("gains"))
                for (const json& g : design["gains"]) {
                    BlockIndex b{g.at("eig").get<int>() - 1, g.at("mini").get<int>() - 1};
                    cfg.gain_policy.overrides[b] = g.at("k").get<double>();
                }
            if (design.contains("luenberger")) {
                cfg.luenberger.resize(cfg.outputs.C.size());
                for (const json& l : design["luenberger"]) {
                    const int agent = l.at("agent").get<int>() - 1;
                    if (agent < 0 || agent >= static_cast<int>(cfg.outputs.C.size()))
                        throw ConfigError("design.luenberger[].agent: out of range");
                    cfg.luenberger[static_cast<std::size_t>(agent)].user_gain =
                        detail::parse_matrix(l.at("L"), "design.luenberger[].L");
                }
            }
            if (design.contains("target_radius")) {
                const double r = design["target_radius"].get<double>();
                if (cfg.luenberger.empty()) cfg.luenberger.resize(cfg.outputs.C.size());
                for (LuenbergerPolicy& p : cfg.luenberger) p.target_radius = r;
            }
        }
        if (j.contains("simulation")) {
            const json& sim = j["simulation"];
            cfg.simulation.horizon = sim.value("T", 500);
            cfg.simulation.tol = sim.value("tol", 1e-4);
            cfg.simulation.seed = sim.value("seed", std::uint64_t{1});
            cfg.simulation.wide_trace = sim.value("wide", false);
            if (sim.contains("input")) cfg.simulation.input = detail::parse_input(sim["input"]);
        }
        if (j.contains("tolerances")) {
            cfg.structural_zero_tol = j["tolerances"].value("structural_zero_tol", 0.0);
            cfg.rank_tol = j["tolerances"].value("rank_tol", 1e-9);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return parse_config(j);
}

// ---- report serialization -------------------------------------------------

inline json to_json(const GainInterval& iv) {
    json j;
    j["empty"] = iv.empty;
    if (!iv.empty) {
        j["lo"] = iv.lo;
        j["hi"] = std::isfinite(iv.hi) ? json(iv.hi) : json();
    }
    return j;
}

inline json spectrum_to_json(const ComplexVec& values) {
    json arr = json::array();
    for (const Complex& z : values) arr.push_back({{"re", z.real()}, {"im", z.imag()}});
    return arr;
}

inline json classification_to_json(const JordanSpec& spec, const AgentOutputs& outputs,
                                   const MiniblockClassification& cls) {
    json j;
    j["t"] = json::array();
    for (int i = 0; i < outputs.agent_count(); ++i)
        for (const auto& [b, t] : cls.t[static_cast<std::size_t>(i)])
            j["t"].push_back({{"agent", i + 1}, {"eig", b.eig + 1}, {"mini", b.mini + 1}, {"t", t}});
    auto plus_one = [](const std::vector<int>& v) {
        json arr = json::array();
        for (int x : v) arr.push_back(x + 1);
        return arr;
    };
    j["G"] = json::array();
    for (int i = 0; i < outputs.agent_count(); ++i)
        for (int e = 0; e < spec.unstable_count(); ++e)
            j["G"].push_back({{"agent", i + 1},
                              {"eig", e + 1},
                              {"unobserved", plus_one(cls.g_set(i, e, ObsClass::Unobserved))},
                              {"partial", plus_one(cls.g_set(i, e, ObsClass::Partial))},
                              {"complete", plus_one(cls.g_set(i, e, ObsClass::Complete))}});
    j["V"] = json::array();
    for (BlockIndex b : spec.unstable_blocks())
        j["V"].push_back({{"eig", b.eig + 1},
                          {"mini", b.mini + 1},
                          {"unobserved", plus_one(cls.v_set(b, ObsClass::Unobserved))},
                          {"partial", plus_one(cls.v_set(b, ObsClass::Partial))},
                          {"complete", plus_one(cls.v_set(b, ObsClass::Complete))}});
    return j;
}

inline json solvability_to_json(const SolvabilityReport& report) {
    json j;
    j["strategy1_feasible"] = report.strategy1_feasible;
    j["strategy2_feasible"] = report.strategy2_feasible;
    j["blocks"] = json::array();
    for (const BlockSolvability& bs : report.blocks) {
        json b;
        b["eig"] = bs.block.eig + 1;
        b["mini"] = bs.block.mini + 1;
        b["lambda"] = bs.lambda;
        b["dim"] = bs.dim;
        b["gain_needed"] = bs.gain_needed;
        if (bs.gain_needed) {
            b["strategy1_spectrum"] = spectrum_to_json(bs.strategy1_values);
            b["strategy2_spectrum"] = spectrum_to_json(bs.strategy2_values);
            b["strategy1_interval"] = to_json(bs.strategy1_interval);
            b["strategy2_interval"] = to_json(bs.strategy2_interval);
            b["strategy1_feasible"] = bs.strategy1_feasible;
            b["strategy2_feasible"] = bs.strategy2_feasible;
            b["spanning_forest"] = bs.spanning_forest;
            if (bs.undirected) {
                b["undirected"] = {{"ratio_ok", bs.undirected->ratio_ok},
                                   {"mu_min", bs.undirected->mu_min},
                                   {"mu_max", bs.undirected->mu_max},
                                   {"interval", to_json(bs.undirected->interval)}};
            }
        }
        if (!bs.diagnostic.empty()) b["diagnostic"] = bs.diagnostic;
        j["blocks"].push_back(std::move(b));
    }
    return j;
}

inline json bank_summary_to_json(const ObserverBank& bank, const ErrorDynamics& dyn) {
    json j;
    j["strategy"] = bank.strategy;
    j["closed_loop_radius"] = schur_radius(dyn.M);
    j["gains"] = json::array();
    for (const auto& [b, k] : bank.gains)
        j["gains"].push_back({{"eig", b.eig + 1}, {"mini", b.mini + 1}, {"k", k}});
    j["agents"] = json::array();
    for (std::size_t i = 0; i < bank.agents.size(); ++i) {
        const AgentObserver& obs = bank.agents[i];
        auto perm_one_based = [](const std::vector<int>& perm) {
            json arr = json::array();
            for (int p : perm) arr.push_back(p + 1);
            return arr;
        };
        json a = {{"agent", static_cast<int>(i) + 1},
                  {"observer_order", obs.order()},
                  {"consensus_dim", obs.consensus_dim()},
                  {"luenberger_dim", obs.luenberger_dim()},
                  {"luenberger_radius",
                   schur_radius(obs.det.A_det - obs.luenberger_gain * obs.det.C_det)},
                  {"detectability_permutation", perm_one_based(obs.det.perm)}};
        if (obs.aug) a["augmented_permutation"] = perm_one_based(obs.aug->perm);
        j["agents"].push_back(std::move(a));
    }
    return j;
}

inline json metrics_to_json(const std::vector<AgentMetrics>& metrics) {
    json arr = json::array();
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        json m;
        m["agent"] = static_cast<int>(i) + 1;
        m["converged"] = metrics[i].converged;
        if (metrics[i].settling_time) m["settling_time"] = *metrics[i].settling_time;
        m["terminal_ratio"] = metrics[i].terminal_ratio;
        arr.push_back(std::move(m));
    }
    return arr;
}

// ---- CSV trace ------------------------------------------------------------

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

/// One row per time step: t, err_norm_1..err_norm_N, and optionally every
/// state and estimate entry. Header row is mandatory.
inline void write_trace_csv(std::ostream& out, const SimulationTrace& trace, bool wide = false) {
    const int N = static_cast<int>(trace.err_norm.size());
    const int n = static_cast<int>(trace.x.rows());
    out << "t";
    for (int i = 1; i <= N; ++i) out << ",err_norm_" << i;
    if (wide) {
        for (int s = 1; s <= n; ++s) out << ",x_" << s;
        for (int i = 1; i <= N; ++i)
            for (int s = 1; s <= n; ++s) out << ",xhat_" << i << "_" << s;
    }
    out << "\n";
    for (int t = 0; t <= trace.horizon; ++t) {
        out << t;
        for (int i = 0; i < N; ++i) out << "," << format_double(trace.err_norm[static_cast<std::size_t>(i)](t));
        if (wide) {
            for (int s = 0; s < n; ++s) out << "," << format_double(trace.x(s, t));
            for (int i = 0; i < N; ++i)
                for (int s = 0; s < n; ++s)
                    out << "," << format_double(trace.xhat[static_cast<std::size_t>(i)](s, t));
        }
        out << "\n";
    }
}

struct CsvTrace {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// Minimal loader for the traces this library writes (round-trip checks).
inline CsvTrace read_trace_csv(std::istream& in) {
    CsvTrace out;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: missing header");
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) out.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != out.columns.size()) throw std::runtime_error("ragged CSV row");
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace distobs
