#pragma once

#include "distobs/model.hpp"

#include <array>
#include <bit>
#include <map>
#include <optional>
#include <utility>

namespace distobs {

/// Observability of one miniblock through one agent's output block.
enum class ObsClass { Unobserved = 0, Partial = 1, Complete = 2 };

/// 1-based index of the first column of `block` that is nonzero under `zero_tol`,
/// or nullopt when every column is zero. Classification is structural, so the
/// default tolerance is exact zero.
inline std::optional<int> first_obs_index(const Matrix& block, double zero_tol = 0.0) {
    for (Eigen::Index c = 0; c < block.cols(); ++c)
        for (Eigen::Index r = 0; r < block.rows(); ++r)
            if (std::abs(block(r, c)) > zero_tol) return static_cast<int>(c) + 1;
    return std::nullopt;
}

namespace detail {

inline void hash_combine(std::uint64_t& h, std::uint64_t v) {
    // FNV-1a step over 8 bytes
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
    }
}

/// Structural fingerprint of the plant and the output maps; used to detect
/// classifications applied to inputs they were not computed from.
inline std::uint64_t instance_checksum(const SystemModel& system, const AgentOutputs& outputs) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const EigenBlock& eb : system.jordan.eigens) {
        hash_combine(h, std::bit_cast<std::uint64_t>(eb.lambda));
        for (int d : eb.miniblock_dims) hash_combine(h, static_cast<std::uint64_t>(d));
    }
    hash_combine(h, static_cast<std::uint64_t>(system.B.rows()));
    hash_combine(h, static_cast<std::uint64_t>(system.B.cols()));
    for (Eigen::Index i = 0; i < system.B.size(); ++i)
        hash_combine(h, std::bit_cast<std::uint64_t>(*(system.B.data() + i)));
    for (const Matrix& c : outputs.C) {
        hash_combine(h, static_cast<std::uint64_t>(c.rows()));
        for (Eigen::Index i = 0; i < c.size(); ++i)
            hash_combine(h, std::bit_cast<std::uint64_t>(*(c.data() + i)));
    }
    return h;
}

}  // namespace detail

/// Per-agent observability classification of the unstable Jordan miniblocks.
///
/// For agent i and unstable eigenvalue index e, `G[i][e]` partitions the
/// miniblock indices into the three classes; `V` gives the dual partition of
/// the agents per miniblock. `t` holds, for every (agent, block) whose output
/// block is nonzero, the 1-based first nonzero column index.
struct MiniblockClassification {
    std::vector<std::map<BlockIndex, int>> t;                          // [agent] -> block -> t value
    std::vector<std::vector<std::array<std::vector<int>, 3>>> G;      // [agent][unstable eig][class]
    std::map<BlockIndex, std::array<std::vector<int>, 3>> V;          // unstable block -> agents per class
    std::uint64_t checksum = 0;

    std::optional<int> t_of(int agent, BlockIndex b) const {
        auto it = t[agent].find(b);
        if (it == t[agent].end()) return std::nullopt;
        return it->second;
    }

    ObsClass class_of(int agent, BlockIndex b) const {
        auto opt = t_of(agent, b);
        if (!opt) return ObsClass::Unobserved;
        return *opt == 1 ? ObsClass::Complete : ObsClass::Partial;
    }

    const std::vector<int>& g_set(int agent, int eig, ObsClass k) const {
        return G[agent][eig][static_cast<int>(k)];
    }

    const std::vector<int>& v_set(BlockIndex b, ObsClass k) const {
        return V.at(b)[static_cast<int>(k)];
    }

    /// Agents for which the block is not completely observable, ascending.
    std::vector<int> v_incomplete(BlockIndex b) const {
        std::vector<int> out = v_set(b, ObsClass::Unobserved);
        const std::vector<int>& partial = v_set(b, ObsClass::Partial);
        out.insert(out.end(), partial.begin(), partial.end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

/// Computes the observability classes of every unstable miniblock for every
/// agent, together with the first-nonzero-column indices of all blocks.
inline MiniblockClassification classify(const SystemModel& system, const AgentOutputs& outputs,
                                        double structural_zero_tol = 0.0) {
    const JordanSpec& spec = system.jordan;
    const int N = outputs.agent_count();
    const int r_u = spec.unstable_count();

    MiniblockClassification cls;
    cls.t.resize(N);
    cls.G.assign(N, std::vector<std::array<std::vector<int>, 3>>(r_u));
    cls.checksum = detail::instance_checksum(system, outputs);

    for (BlockIndex b : spec.unstable_blocks()) cls.V[b] = {};

    for (int i = 0; i < N; ++i) {
        for (BlockIndex b : spec.all_blocks()) {
            auto t = first_obs_index(outputs.block(i, b, spec), structural_zero_tol);
            if (t) cls.t[i][b] = *t;
            if (b.eig >= r_u) continue;  // stable blocks are not classified
            ObsClass k = !t ? ObsClass::Unobserved : (*t == 1 ? ObsClass::Complete : ObsClass::Partial);
            cls.G[i][b.eig][static_cast<int>(k)].push_back(b.mini);
            cls.V[b][static_cast<int>(k)].push_back(i);
        }
    }
    return cls;
}

struct Assumption1Result {
    bool ok = false;
    std::optional<int> failing_eig;   // 0-based eigenvalue index when !ok
    bool v3_all_nonempty = false;     // the weaker necessary consequence
};

/// Joint detectability of (A, stacked C). With A in Jordan form this reduces to
/// a PBH rank test per unstable eigenvalue: the stacked output columns at the
/// first-state positions of its miniblocks must be linearly independent.
inline Assumption1Result check_assumption1(const SystemModel& system, const AgentOutputs& outputs,
                                           const MiniblockClassification& cls, double rank_tol = 1e-9) {
    const JordanSpec& spec = system.jordan;
    Assumption1Result res;

    res.v3_all_nonempty = true;
    for (BlockIndex b : spec.unstable_blocks())
        if (cls.v_set(b, ObsClass::Complete).empty()) res.v3_all_nonempty = false;

    int total_rows = 0;
    for (int i = 0; i < outputs.agent_count(); ++i) total_rows += outputs.output_dim(i);

    res.ok = true;
    for (int e = 0; e < spec.unstable_count(); ++e) {
        const int g = spec.mini_count(e);
        Matrix kernel_cols(total_rows, g);
        for (int h = 0; h < g; ++h) {
            const int col = spec.offset({e, h});
            int row = 0;
            for (int i = 0; i < outputs.agent_count(); ++i) {
                kernel_cols.block(row, h, outputs.output_dim(i), 1) = outputs.C[i].col(col);
                row += outputs.output_dim(i);
            }
        }
        if (numeric_rank(kernel_cols, rank_tol) < g) {
            res.ok = false;
            res.failing_eig = e;
            return res;
        }
    }
    return res;
}

struct Assumption2Result {
    bool ok = false;
    std::optional<std::pair<int, int>> failing;  // (agent, eigenvalue index), 0-based
};

/// Per-agent independence of the first observed columns: for every agent and
/// unstable eigenvalue, the vectors C_i^{block} * e_t over the partly and
/// completely observable miniblocks must be linearly independent.
inline Assumption2Result check_assumption2(const AgentOutputs& outputs, const JordanSpec& spec,
                                           const MiniblockClassification& cls, double rank_tol = 1e-9) {
    Assumption2Result res;
    res.ok = true;
    for (int i = 0; i < outputs.agent_count(); ++i) {
        for (int e = 0; e < spec.unstable_count(); ++e) {
            std::vector<int> cols;
            for (int h = 0; h < spec.mini_count(e); ++h) {
                auto t = cls.t_of(i, {e, h});
                if (t) cols.push_back(spec.offset({e, h}) + *t - 1);
            }
            if (cols.empty()) continue;  // vacuously independent
            Matrix m(outputs.output_dim(i), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = outputs.C[i].col(cols[c]);
            if (numeric_rank(m, rank_tol) < static_cast<int>(cols.size())) {
                res.ok = false;
                res.failing = {i, e};
                return res;
            }
        }
    }
    return res;
}

}  // namespace distobs
