#pragma once

#include "distobs/canon.hpp"
#include "distobs/solvability.hpp"

namespace distobs {

/// How the Luenberger gain of one agent is obtained. By default the observable
/// part of the detectable pair gets eigenvalues equispaced on
/// [-target_radius, target_radius] and the unobservable stable part zero gain
/// rows; a user-supplied gain is accepted as-is and only checked for Schur
/// stability of the closed loop.
struct LuenbergerPolicy {
    std::optional<Matrix> user_gain;
    double target_radius = 0.2;
    double stability_margin = 0.01;
    double rank_tol = 1e-9;
};

namespace detail {

struct ObservableSplit {
    Matrix Q;        // orthogonal; leading columns span the observable subspace
    int obs_dim = 0;
};

inline ObservableSplit observable_split(const Matrix& a, const Matrix& c, double rank_tol) {
    const Eigen::Index n = a.rows();
    Matrix obs(n * c.rows(), n);
    Matrix block = c;
    for (Eigen::Index i = 0; i < n; ++i) {
        obs.middleRows(i * c.rows(), c.rows()) = block;
        block = block * a;
    }
    Eigen::JacobiSVD<Matrix> svd(obs, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv(0) > 0.0)
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > rank_tol * sv(0)) ++rank;
    return {svd.matrixV(), rank};
}

/// Observer gain for a single-output observable pair placing the given
/// eigenvalues: l = q(A) O^{-1} e_n with q the desired characteristic polynomial.
inline Vector ackermann_observer_gain(const Matrix& a, const Eigen::RowVectorXd& c,
                                      const std::vector<double>& desired) {
    const Eigen::Index n = a.rows();
    Matrix obs(n, n);
    Eigen::RowVectorXd row = c;
    for (Eigen::Index i = 0; i < n; ++i) {
        obs.row(i) = row;
        row = row * a;
    }
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = 1.0;
    const Vector x = obs.colPivHouseholderQr().solve(rhs);
    Matrix q = Matrix::Identity(n, n);
    for (double d : desired) q = q * (a - d * Matrix::Identity(n, n));
    return q * x;
}

inline Matrix place_recursive(const Matrix& a, const Matrix& c, const std::vector<double>& desired,
                              std::size_t& cursor, double rank_tol) {
    const Eigen::Index n = a.rows();
    const Eigen::Index p = c.rows();
    if (n == 0) return Matrix(0, p);

    const double c_scale = max_abs(c);
    int out_row = -1;
    for (Eigen::Index j = 0; j < p; ++j)
        if (c.row(j).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + c_scale)) {
            out_row = static_cast<int>(j);
            break;
        }
    if (out_row < 0) {
        // Unobservable remainder: admissible only if already stable.
        if (spectral_radius(a) >= 1.0)
            throw std::runtime_error("detectability violated: unobservable eigenvalue with modulus >= 1");
        return Matrix::Zero(n, p);
    }

    const ObservableSplit split = observable_split(a, c.row(out_row), rank_tol);
    const int k = split.obs_dim;
    const Matrix aq = split.Q.transpose() * a * split.Q;
    const Matrix cq = c * split.Q;

    std::vector<double> chunk(desired.begin() + static_cast<long>(cursor),
                              desired.begin() + static_cast<long>(cursor + static_cast<std::size_t>(k)));
    cursor += static_cast<std::size_t>(k);
    const Vector lo = ackermann_observer_gain(aq.topLeftCorner(k, k), cq.row(out_row).head(k), chunk);

    Matrix lq = Matrix::Zero(n, p);
    lq.block(0, out_row, k, 1) = lo;
    lq.bottomRows(n - k) = place_recursive(aq.bottomRightCorner(n - k, n - k), cq.rightCols(n - k),
                                           desired, cursor, rank_tol);
    return split.Q * lq;
}

inline std::vector<double> default_target_spectrum(int n, double radius) {
    std::vector<double> out;
    if (n == 1) return {0.0};
    for (int i = 0; i < n; ++i)
        out.push_back(-radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(n - 1));
    return out;
}

}  // namespace detail

/// Observer gain with schur_radius(A_det - L C_det) below 1 - stability_margin.
/// Throws when the pair is not detectable or the margin cannot be met.
inline Matrix place_luenberger(const Matrix& a_det, const Matrix& c_det,
                               const LuenbergerPolicy& policy = {}) {
    if (policy.user_gain) {
        const Matrix& l = *policy.user_gain;
        if (l.rows() != a_det.rows() || l.cols() != c_det.rows())
            throw std::invalid_argument("user Luenberger gain has wrong dimensions");
        if (schur_radius(a_det - l * c_det) >= 1.0)
            throw std::runtime_error("user Luenberger gain does not make the error dynamics Schur");
        return l;
    }
    const int n = static_cast<int>(a_det.rows());
    std::vector<double> desired = detail::default_target_spectrum(n, policy.target_radius);
    std::size_t cursor = 0;
    const Matrix l = detail::place_recursive(a_det, c_det, desired, cursor, policy.rank_tol);
    const double radius = schur_radius(a_det - l * c_det);
    if (radius >= 1.0 - policy.stability_margin)
        throw std::runtime_error("Luenberger design misses the stability margin (radius " +
                                 std::to_string(radius) + ")");
    return l;
}

/// Gain selection for the feasible blocks: interval midpoint by default,
/// validated user overrides otherwise. Blocks that need no gain are skipped.
struct GainPolicy {
    std::map<BlockIndex, double> overrides;
};

inline std::map<BlockIndex, double> pick_gains(const SolvabilityReport& report, int strategy,
                                               const GainPolicy& policy = {}) {
    std::map<BlockIndex, double> gains;
    for (const BlockSolvability& bs : report.blocks) {
        if (!bs.gain_needed) continue;
        const GainInterval& iv = strategy == 1 ? bs.strategy1_interval : bs.strategy2_interval;
        const std::string name =
            "(" + std::to_string(bs.block.eig + 1) + "," + std::to_string(bs.block.mini + 1) + ")";
        if (iv.empty)
            throw std::runtime_error("no feasible gain for miniblock " + name + " under strategy " +
                                     std::to_string(strategy));
        auto it = policy.overrides.find(bs.block);
        if (it != policy.overrides.end()) {
            if (!iv.contains(it->second))
                throw std::runtime_error("gain override " + std::to_string(it->second) +
                                         " for miniblock " + name + " lies outside the feasible interval");
            gains[bs.block] = it->second;
        } else if (std::isfinite(iv.hi)) {
            gains[bs.block] = 0.5 * (iv.lo + iv.hi);
        } else {
            gains[bs.block] = iv.lo + 1.0;
        }
    }
    return gains;
}

/// One agent's complete observer: the permutation forms, the Luenberger gain,
/// the diagonal of the consensus gain, and the neighbor gather maps realizing
/// the cross-agent coordinate changes as pure index lookups. Strategy-1 maps
/// cover the whole permuted state (the consensus update reads the neighbors'
/// estimates of the coupled tail coordinates too); Strategy-2 maps cover the
/// consensus part, reading detectable entries through the [0 I] selector.
struct AgentObserver {
    DetectabilityForm det;
    std::optional<AugmentedForm> aug;
    Matrix luenberger_gain;
    Vector consensus_gain;                        // diagonal of K_i
    std::vector<std::vector<int>> neighbor_gather;  // [j] nonempty only for neighbors

    int consensus_dim() const { return aug ? aug->n_consensus : det.n_undet; }
    int luenberger_dim() const { return det.n_det; }
    /// Total observer state carried by the agent.
    int order() const { return consensus_dim() + luenberger_dim(); }
};

struct ObserverBank {
    int strategy = 1;
    SystemModel system;
    AgentOutputs outputs;
    SensorNetwork net;
    Matrix lap;
    std::vector<AgentObserver> agents;
    std::map<BlockIndex, double> gains;
};

namespace detail {

inline std::vector<int> inverse_perm(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inv[static_cast<std::size_t>(perm[k])] = static_cast<int>(k);
    return inv;
}

/// Index into agent j's stacked observer state holding the estimate of
/// original state s. Strategy 1 stacks [z_u; z_d]; Strategy 2 stacks
/// [x_u; z_d] and reads detectable entries through the [0 I] selector.
inline int stacked_source_index(const AgentObserver& obs, int original_state) {
    if (!obs.aug) {
        const std::vector<int> inv = inverse_perm(obs.det.perm);
        return inv[static_cast<std::size_t>(original_state)];
    }
    const AugmentedForm& aug = *obs.aug;
    const std::vector<int> inv = inverse_perm(aug.perm);
    const int m = inv[static_cast<std::size_t>(original_state)];
    if (m < aug.n_consensus) return m;
    return aug.n_consensus + aug.selector_offset + (m - aug.n_consensus);
}

}  // namespace detail

/// Assembles the full observer bank for the chosen strategy. The gains map must
/// contain one entry per miniblock that is not completely observable everywhere.
inline ObserverBank build_observers(const SystemModel& system, const AgentOutputs& outputs,
                                    const SensorNetwork& net, const MiniblockClassification& cls,
                                    int strategy, const std::map<BlockIndex, double>& gains,
                                    const std::vector<LuenbergerPolicy>& policies = {}) {
    if (strategy != 1 && strategy != 2) throw std::invalid_argument("strategy must be 1 or 2");
    detail::require_fresh(system, outputs, cls);

    ObserverBank bank;
    bank.strategy = strategy;
    bank.system = system;
    bank.outputs = outputs;
    bank.net = net;
    bank.lap = laplacian(net);
    bank.gains = gains;

    const int N = outputs.agent_count();
    for (int i = 0; i < N; ++i) {
        AgentObserver obs;
        obs.det = build_detectability_form(system, outputs, cls, i);
        if (strategy == 2) obs.aug = build_augmented_form(system, outputs, cls, i);

        const LuenbergerPolicy policy = i < static_cast<int>(policies.size()) ? policies[i] : LuenbergerPolicy{};
        obs.luenberger_gain = place_luenberger(obs.det.A_det, obs.det.C_det, policy);

        const std::vector<BlockIndex>& owners = obs.aug ? obs.aug->consensus_block : obs.det.undet_block;
        obs.consensus_gain = Vector::Zero(static_cast<Eigen::Index>(owners.size()));
        for (std::size_t k = 0; k < owners.size(); ++k)
            obs.consensus_gain(static_cast<Eigen::Index>(k)) = gains.at(owners[k]);

        bank.agents.push_back(std::move(obs));
    }

    // Neighbor gather maps need every agent's form to exist first. Strategy 1
    // applies [A_u A_*] to the gathered difference, so the gather spans the
    // whole permuted state; Strategy 2 needs the consensus part only.
    for (int i = 0; i < N; ++i) {
        AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
        obs.neighbor_gather.resize(static_cast<std::size_t>(N));
        const std::vector<int>& perm = obs.aug ? obs.aug->perm : obs.det.perm;
        const int width = obs.aug ? obs.consensus_dim() : static_cast<int>(perm.size());
        for (int j : net.neighbors(i)) {
            std::vector<int> gather(static_cast<std::size_t>(width));
            for (int k = 0; k < width; ++k)
                gather[static_cast<std::size_t>(k)] = detail::stacked_source_index(
                    bank.agents[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(k)]);
            obs.neighbor_gather[static_cast<std::size_t>(j)] = std::move(gather);
        }
    }
    return bank;
}

/// Full block-triangular error-dynamics matrix of the bank, together with the
/// offsets of each agent's consensus and Luenberger error sub-vectors within
/// the stacked error state. This is the end-to-end oracle: the simulated
/// stacked error obeys e(t+1) = M e(t) exactly when u enters both sides.
struct ErrorDynamics {
    Matrix M;
    std::vector<int> consensus_offset;   // per agent, into the stacked error
    std::vector<int> luenberger_offset;  // per agent
    int consensus_total = 0;
    int luenberger_total = 0;

    int dim() const { return consensus_total + luenberger_total; }
};

inline ErrorDynamics closed_loop_error_matrix(const ObserverBank& bank) {
    const int N = bank.outputs.agent_count();
    ErrorDynamics dyn;
    dyn.consensus_offset.resize(N);
    dyn.luenberger_offset.resize(N);
    int off = 0;
    for (int i = 0; i < N; ++i) {
        dyn.consensus_offset[i] = off;
        off += bank.agents[static_cast<std::size_t>(i)].consensus_dim();
    }
    dyn.consensus_total = off;
    for (int i = 0; i < N; ++i) {
        dyn.luenberger_offset[i] = off;
        off += bank.agents[static_cast<std::size_t>(i)].luenberger_dim();
    }
    dyn.luenberger_total = off - dyn.consensus_total;
    dyn.M = Matrix::Zero(off, off);

    for (int i = 0; i < N; ++i) {
        const AgentObserver& obs = bank.agents[static_cast<std::size_t>(i)];
        const int ui = dyn.consensus_offset[i];
        const int di = dyn.luenberger_offset[i];
        const int nu = obs.consensus_dim();
        const int nd = obs.luenberger_dim();

        // Luenberger error: eta_d(t+1) = (A_det - L C_det) eta_d(t), decoupled.
        dyn.M.block(di, di, nd, nd) = obs.det.A_det - obs.luenberger_gain * obs.det.C_det;

        const Matrix& a_u = obs.aug ? obs.aug->A_consensus : obs.det.A_undet;
        dyn.M.block(ui, ui, nu, nu) += a_u;
        if (!obs.aug) dyn.M.block(ui, di, nu, nd) += obs.det.A_coupling;

        // Consensus coupling: -[L]_{ij} K_i [A_u A_*] applied to the gathered
        // full difference. The split miniblocks couple their unobserved heads
        // to the first tail coordinate, so the gather spans all state entries
        // the row block touches, not only the consensus part (j = i included).
        const int width = obs.aug ? nu : nu + nd;
        Matrix t(nu, width);
        t.leftCols(nu) = obs.consensus_gain.asDiagonal() * a_u;
        if (!obs.aug) t.rightCols(nd) = obs.consensus_gain.asDiagonal() * obs.det.A_coupling;
        const std::vector<int>& perm = obs.aug ? obs.aug->perm : obs.det.perm;
        std::vector<int> js = bank.net.neighbors(i);
        js.push_back(i);
        for (int j : js) {
            const double lij = bank.lap(i, j);
            if (lij == 0.0) continue;
            const AgentObserver& nb = bank.agents[static_cast<std::size_t>(j)];
            const std::vector<int> inv =
                detail::inverse_perm(nb.aug ? nb.aug->perm : nb.det.perm);
            for (int k = 0; k < width; ++k) {
                if (t.col(k).isZero(0.0)) continue;
                const int m = inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
                if (m < nb.consensus_dim()) {
                    dyn.M.block(ui, dyn.consensus_offset[j] + m, nu, 1) -= lij * t.col(k);
                } else if (!nb.aug) {
                    dyn.M.block(ui, dyn.luenberger_offset[j] + (m - nb.consensus_dim()), nu, 1) -=
                        lij * t.col(k);
                } else {
                    // Detectable entries of the neighbor live behind the [0 I]
                    // selector inside its Luenberger error.
                    const int sel = nb.aug->selector_offset + (m - nb.consensus_dim());
                    dyn.M.block(ui, dyn.luenberger_offset[j] + sel, nu, 1) -= lij * t.col(k);
                }
            }
        }
    }
    return dyn;
}

}  // namespace distobs
