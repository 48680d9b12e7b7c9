#pragma once

#include "distobs/model.hpp"

#include <random>

namespace distobs {

/// Bounds for randomized instances. Defaults match the verification suite:
/// small networks, short miniblocks, weights in [0.1, 2].
struct RandomInstanceOptions {
    int min_agents = 2;
    int max_agents = 5;
    int max_unstable_eigs = 2;
    int max_stable_eigs = 1;
    int max_minis_per_eig = 2;
    int max_block_dim = 3;
    bool undirected = false;
    double edge_prob = 0.55;
    bool with_input = false;
};

struct RandomInstance {
    SystemModel system;
    AgentOutputs outputs;
    SensorNetwork net;
};

/// Draws a random instance satisfying both standing assumptions by
/// construction: every unstable miniblock is completely observable for at
/// least one agent, and each agent observes each of its blocks through a
/// dedicated one-hot output row, so the per-agent first-column vectors are
/// independent. Graph connectivity is left to chance.
inline RandomInstance random_instance(std::mt19937_64& rng, const RandomInstanceOptions& opt = {}) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto pick_int = [&](int lo, int hi) {
        return lo + static_cast<int>(unit(rng) * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
    };

    RandomInstance inst;
    JordanSpec& spec = inst.system.jordan;

    const int n_unstable = pick_int(1, opt.max_unstable_eigs);
    const int n_stable = pick_int(0, opt.max_stable_eigs);
    std::vector<double> magnitudes;  // |lambda| values drawn so far; kept separated
    auto fresh_magnitude = [&](double lo, double hi) {
        for (;;) {
            double m = lo + (hi - lo) * unit(rng);
            bool ok = true;
            for (double o : magnitudes)
                if (std::abs(m - o) < 0.05) ok = false;
            if (ok) return m;
        }
    };
    auto add_eigenvalue = [&](double mag) {
        magnitudes.push_back(mag);
        EigenBlock eb;
        eb.lambda = unit(rng) < 0.3 ? -mag : mag;
        const int g = pick_int(1, opt.max_minis_per_eig);
        for (int h = 0; h < g; ++h) eb.miniblock_dims.push_back(pick_int(1, opt.max_block_dim));
        spec.eigens.push_back(std::move(eb));
    };
    for (int e = 0; e < n_unstable; ++e) {
        const bool want_one = unit(rng) < 0.25 && magnitudes.empty();
        add_eigenvalue(want_one ? 1.0 : fresh_magnitude(1.0, 1.9));
    }
    for (int e = 0; e < n_stable; ++e) add_eigenvalue(fresh_magnitude(0.1, 0.85));

    const int n = spec.total_dim();
    const int N = pick_int(opt.min_agents, opt.max_agents);

    // Observation pattern: per (agent, block) choose unobserved / partial / full.
    const std::vector<BlockIndex> blocks = spec.all_blocks();
    std::vector<std::vector<int>> t_of(static_cast<std::size_t>(N),
                                       std::vector<int>(blocks.size(), 0));  // 0 = unobserved
    for (int i = 0; i < N; ++i)
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const int d = spec.dim(blocks[b]);
            const double roll = unit(rng);
            if (roll < 0.35) t_of[static_cast<std::size_t>(i)][b] = 0;
            else if (roll < 0.70 || d == 1) t_of[static_cast<std::size_t>(i)][b] = 1;
            else t_of[static_cast<std::size_t>(i)][b] = pick_int(2, d);
        }
    // Every unstable block needs a completely observing agent.
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].eig >= spec.unstable_count()) continue;
        bool covered = false;
        for (int i = 0; i < N; ++i)
            if (t_of[static_cast<std::size_t>(i)][b] == 1) covered = true;
        if (!covered) t_of[static_cast<std::size_t>(pick_int(0, N - 1))][b] = 1;
    }

    for (int i = 0; i < N; ++i) {
        std::vector<std::pair<int, int>> taps;  // (column, block) per observed block
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const int t = t_of[static_cast<std::size_t>(i)][b];
            if (t > 0) taps.push_back({spec.offset(blocks[b]) + t - 1, static_cast<int>(b)});
        }
        Matrix c = Matrix::Zero(std::max<std::size_t>(taps.size(), 1), n);
        for (std::size_t r = 0; r < taps.size(); ++r) {
            c(static_cast<Eigen::Index>(r), taps[r].first) = 0.5 + 1.5 * unit(rng);
            // Extra entries beyond the first observed column keep t unchanged.
            const BlockIndex blk = blocks[static_cast<std::size_t>(taps[r].second)];
            for (int col = taps[r].first + 1; col < spec.offset(blk) + spec.dim(blk); ++col)
                if (unit(rng) < 0.3) c(static_cast<Eigen::Index>(r), col) = -1.0 + 2.0 * unit(rng);
        }
        inst.outputs.C.push_back(std::move(c));
    }

    inst.net.directed = !opt.undirected;
    inst.net.adjacency = Matrix::Zero(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = opt.undirected ? i + 1 : 0; j < N; ++j) {
            if (j == i) continue;
            if (unit(rng) < opt.edge_prob) {
                const double w = 0.1 + 1.9 * unit(rng);
                inst.net.adjacency(i, j) = w;
                if (opt.undirected) inst.net.adjacency(j, i) = w;
            }
        }

    inst.system.B = opt.with_input ? Matrix::Ones(n, 1) : Matrix(n, 0);
    return inst;
}

}  // namespace distobs
