#pragma once

#include "distobs/design.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <variant>

namespace distobs {

/// Deterministic input signal u(t) for the plant and all observers.
struct InputSignal {
    struct Zero {};
    struct Step {
        Vector value;
    };
    struct Sinusoid {
        Vector amplitude, frequency, phase;  // per channel; u_c(t) = a sin(2 pi f t + phi)
    };
    struct Samples {
        Matrix values;  // m x T, column t used at time t (last column held afterwards)
    };
    std::variant<Zero, Step, Sinusoid, Samples> kind = Zero{};

    Vector at(int t, int m) const {
        if (std::holds_alternative<Zero>(kind)) return Vector::Zero(m);
        if (const Step* s = std::get_if<Step>(&kind)) return s->value;
        if (const Sinusoid* s = std::get_if<Sinusoid>(&kind)) {
            Vector u(m);
            for (int c = 0; c < m; ++c)
                u(c) = s->amplitude(c) *
                       std::sin(2.0 * std::numbers::pi * s->frequency(c) * static_cast<double>(t) +
                                s->phase(c));
            return u;
        }
        const Samples& s = std::get<Samples>(kind);
        if (s.values.cols() == 0) return Vector::Zero(m);
        const Eigen::Index col = std::min<Eigen::Index>(t, s.values.cols() - 1);
        return s.values.col(col);
    }
};

/// Initial estimate policy: all-zero estimates, the true state, or a given vector.
struct InitialEstimate {
    enum class Kind { Zero, Truth, Given } kind = Kind::Zero;
    Vector value;

    static InitialEstimate zero() { return {}; }
    static InitialEstimate truth() { return {Kind::Truth, {}}; }
    static InitialEstimate given(Vector v) { return {Kind::Given, std::move(v)}; }
};

struct SimulationTrace {
    int horizon = 0;
    Matrix x;                          // n x (T+1)
    std::vector<Matrix> xhat;          // per agent, n x (T+1)
    std::vector<Vector> err_norm;      // per agent, T+1
    std::vector<Matrix> internal;      // per agent, observer state x (T+1); kept on request
};

struct SimulateOptions {
    bool keep_internal = false;
    double divergence_limit = 1e12;
};

/// Raised when some agent's estimation error exceeds the divergence limit.
struct DivergenceError : std::runtime_error {
    int agent;
    int time;
    DivergenceError(int agent_, int time_, double norm)
        : std::runtime_error("estimation error of agent " + std::to_string(agent_ + 1) +
                             " exceeded " + std::to_string(norm) + " at t=" + std::to_string(time_)),
          agent(agent_),
          time(time_) {}
};

namespace detail {

/// Full-state estimate from the stacked observer state (scatter through the form).
inline Vector recompose_estimate(const AgentObserver& obs, const Vector& stacked) {
    const int n = static_cast<int>(obs.det.perm.size());
    Vector xhat(n);
    if (!obs.aug) {
        for (int k = 0; k < n; ++k) xhat(obs.det.perm[k]) = stacked(k);
        return xhat;
    }
    const AugmentedForm& aug = *obs.aug;
    for (int k = 0; k < aug.n_consensus; ++k) xhat(aug.perm[k]) = stacked(k);
    for (int k = 0; k < aug.n_det; ++k)
        xhat(aug.perm[aug.n_consensus + k]) = stacked(aug.n_consensus + aug.selector_offset + k);
    return xhat;
}

inline Vector initial_stacked(const AgentObserver& obs, const InitialEstimate& init, const Vector& x0) {
    Vector guess;
    switch (init.kind) {
        case InitialEstimate::Kind::Zero: guess = Vector::Zero(x0.size()); break;
        case InitialEstimate::Kind::Truth: guess = x0; break;
        case InitialEstimate::Kind::Given: guess = init.value; break;
    }
    Vector stacked(obs.order());
    if (!obs.aug) {
        for (std::size_t k = 0; k < obs.det.perm.size(); ++k)
            stacked(static_cast<Eigen::Index>(k)) = guess(obs.det.perm[k]);
        return stacked;
    }
    const AugmentedForm& aug = *obs.aug;
    for (int k = 0; k < aug.n_consensus; ++k) stacked(k) = guess(aug.perm[k]);
    for (std::size_t k = 0; k < obs.det.perm.size() - static_cast<std::size_t>(obs.det.n_undet); ++k)
        stacked(aug.n_consensus + static_cast<Eigen::Index>(k)) =
            guess(obs.det.perm[static_cast<std::size_t>(obs.det.n_undet) + k]);
    return stacked;
}

}  // namespace detail

/// Synchronous simulation of the plant and every agent's observer: at each step
/// all agents read the neighbor estimates of time t, then advance together.
inline SimulationTrace simulate(const ObserverBank& bank, const InputSignal& input, const Vector& x0,
                                const InitialEstimate& init, int horizon,
                                const SimulateOptions& options = {}) {
    const int N = bank.outputs.agent_count();
    const int n = bank.system.state_dim();
    const int m = bank.system.input_dim();
    if (x0.size() != n) throw std::invalid_argument("x0 has wrong dimension");
    if (init.kind == InitialEstimate::Kind::Given && init.value.size() != n)
        throw std::invalid_argument("initial estimate has wrong dimension");
    if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
    const Matrix a = bank.system.A();

    SimulationTrace trace;
    trace.horizon = horizon;
    trace.x.resize(n, horizon + 1);
    trace.x.col(0) = x0;
    trace.xhat.assign(static_cast<std::size_t>(N), Matrix(n, horizon + 1));
    trace.err_norm.assign(static_cast<std::size_t>(N), Vector(horizon + 1));
    if (options.keep_internal) trace.internal.resize(static_cast<std::size_t>(N));

    std::vector<Vector> state(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        const AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
        state[static_cast<std::size_t>(i)] = detail::initial_stacked(obs, init, x0);
        if (options.keep_internal)
            trace.internal[static_cast<std::size_t>(i)].resize(obs.order(), horizon + 1);
    }

    std::vector<Vector> next(static_cast<std::size_t>(N));
    for (int t = 0; t <= horizon; ++t) {
        const Vector x = trace.x.col(t);
        for (int i = 0; i < N; ++i) {
            const AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
            const Vector xhat = detail::recompose_estimate(obs, state[static_cast<std::size_t>(i)]);
            trace.xhat[static_cast<std::size_t>(i)].col(t) = xhat;
            const double err = (x - xhat).norm();
            trace.err_norm[static_cast<std::size_t>(i)](t) = err;
            if (options.keep_internal)
                trace.internal[static_cast<std::size_t>(i)].col(t) = state[static_cast<std::size_t>(i)];
            if (!(err <= options.divergence_limit)) throw DivergenceError(i, t, err);
        }
        if (t == horizon) break;

        const Vector u = input.at(t, m);
        if (u.size() != m) throw std::invalid_argument("input signal dimension does not match B");
        for (int i = 0; i < N; ++i) {
            const AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
            const int nu = obs.consensus_dim();
            const int nd = obs.luenberger_dim();
            const Vector& mine = state[static_cast<std::size_t>(i)];
            const Vector mine_u = mine.head(nu);
            const Vector mine_d = mine.tail(nd);

            // Weighted disagreement with the neighbors in my permuted
            // coordinates. Strategy 1 needs the full width: the split blocks
            // couple their heads to the first tail coordinate, so [A_u A_*]
            // acts on the whole difference. Strategy 2 is block diagonal and
            // only ever reads the consensus part.
            const int width = obs.aug ? nu : nu + nd;
            Vector disagree = Vector::Zero(width);
            for (int j : bank.net.neighbors(i)) {
                const std::vector<int>& gather = obs.neighbor_gather[static_cast<std::size_t>(j)];
                const Vector& theirs = state[static_cast<std::size_t>(j)];
                for (int k = 0; k < width; ++k)
                    disagree(k) += bank.net.adjacency(i, j) *
                                   (theirs(gather[static_cast<std::size_t>(k)]) - mine(k));
            }

            const Vector y = bank.outputs.C[static_cast<std::size_t>(i)] * x;
            Vector nxt(obs.order());
            nxt.tail(nd) = obs.det.A_det * mine_d + obs.luenberger_gain * (y - obs.det.C_det * mine_d);
            if (m > 0) nxt.tail(nd) += obs.det.B_det * u;
            if (!obs.aug) {
                nxt.head(nu) = obs.det.A_undet * mine_u + obs.det.A_coupling * mine_d +
                               obs.consensus_gain.asDiagonal() *
                                   (obs.det.A_undet * disagree.head(nu) +
                                    obs.det.A_coupling * disagree.tail(nd));
                if (m > 0) nxt.head(nu) += obs.det.B_undet * u;
            } else {
                nxt.head(nu) = obs.aug->A_consensus * mine_u +
                               obs.consensus_gain.asDiagonal() * (obs.aug->A_consensus * disagree);
                if (m > 0) nxt.head(nu) += obs.aug->B_consensus * u;
            }
            next[static_cast<std::size_t>(i)] = std::move(nxt);
        }
        trace.x.col(t + 1) = a * x;
        if (m > 0) trace.x.col(t + 1) += bank.system.B * u;
        state.swap(next);
    }
    return trace;
}

/// Stacked error vector in the coordinates of closed_loop_error_matrix at time t,
/// extracted from a trace simulated with keep_internal.
inline Vector stacked_error(const ObserverBank& bank, const ErrorDynamics& dyn,
                            const SimulationTrace& trace, int t) {
    if (trace.internal.empty())
        throw std::invalid_argument("stacked_error needs a trace simulated with keep_internal");
    Vector e(dyn.dim());
    for (int i = 0; i < bank.outputs.agent_count(); ++i) {
        const AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
        const Vector& stacked = trace.internal[static_cast<std::size_t>(i)].col(t);
        const Vector x = trace.x.col(t);
        const int nu = obs.consensus_dim();
        const std::vector<int>& perm = obs.aug ? obs.aug->perm : obs.det.perm;
        for (int k = 0; k < nu; ++k)
            e(dyn.consensus_offset[i] + k) = x(perm[k]) - stacked(k);
        for (int k = 0; k < obs.luenberger_dim(); ++k)
            e(dyn.luenberger_offset[i] + k) =
                x(obs.det.perm[static_cast<std::size_t>(obs.det.n_undet + k)]) - stacked(nu + k);
    }
    return e;
}

struct AgentMetrics {
    bool converged = false;
    std::optional<int> settling_time;
    double terminal_ratio = 0.0;
};

/// Settling time is the first t from which the error norm stays below
/// tol * err(0); the terminal ratio is err(T)/err(0) (zero when err(0) = 0).
inline std::vector<AgentMetrics> convergence_metrics(const SimulationTrace& trace, double tol) {
    std::vector<AgentMetrics> out;
    for (const Vector& err : trace.err_norm) {
        AgentMetrics m;
        const double e0 = err(0);
        if (e0 == 0.0) {
            m.converged = true;
            m.settling_time = 0;
            m.terminal_ratio = 0.0;
        } else {
            m.terminal_ratio = err(trace.horizon) / e0;
            int settle = -1;
            for (int t = trace.horizon; t >= 0; --t) {
                if (err(t) < tol * e0) settle = t;
                else break;
            }
            if (settle >= 0) {
                m.converged = true;
                m.settling_time = settle;
            }
        }
        out.push_back(m);
    }
    return out;
}

/// Seeded draw from the unit sphere, for reproducible initial states.
inline Vector unit_sphere_sample(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(n);
    double norm = 0.0;
    do {
        for (int i = 0; i < n; ++i) v(i) = gauss(rng);
        norm = v.norm();
    } while (norm == 0.0);
    return v / norm;
}

}  // namespace distobs
