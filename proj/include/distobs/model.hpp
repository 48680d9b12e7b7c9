#pragma once

#include "distobs/linalg.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace distobs {

/// Identifies one Jordan miniblock: eigenvalue index and miniblock index, both 0-based.
struct BlockIndex {
    int eig = 0;
    int mini = 0;
    auto operator<=>(const BlockIndex&) const = default;
};

/// All miniblocks of one eigenvalue, in their fixed order.
struct EigenBlock {
    double lambda = 0.0;
    std::vector<int> miniblock_dims;
};

/// Eigenvalue/miniblock structure of a system matrix already in Jordan form.
/// Eigenvalues with |lambda| >= 1 must precede the strictly stable ones.
struct JordanSpec {
    std::vector<EigenBlock> eigens;

    int eig_count() const { return static_cast<int>(eigens.size()); }

    int mini_count(int eig) const { return static_cast<int>(eigens[eig].miniblock_dims.size()); }

    double lambda_of(int eig) const { return eigens[eig].lambda; }

    bool unstable(int eig) const { return std::abs(eigens[eig].lambda) >= 1.0; }

    /// Number of leading eigenvalues with |lambda| >= 1 (valid once ordering holds).
    int unstable_count() const {
        int r = 0;
        while (r < eig_count() && unstable(r)) ++r;
        return r;
    }

    int algebraic_multiplicity(int eig) const {
        int a = 0;
        for (int d : eigens[eig].miniblock_dims) a += d;
        return a;
    }

    int total_dim() const {
        int n = 0;
        for (int e = 0; e < eig_count(); ++e) n += algebraic_multiplicity(e);
        return n;
    }

    int dim(BlockIndex b) const { return eigens[b.eig].miniblock_dims[b.mini]; }

    /// 0-based index of the block's first state entry within x.
    int offset(BlockIndex b) const {
        int off = 0;
        for (int e = 0; e < b.eig; ++e) off += algebraic_multiplicity(e);
        for (int h = 0; h < b.mini; ++h) off += eigens[b.eig].miniblock_dims[h];
        return off;
    }

    double lambda_of(BlockIndex b) const { return eigens[b.eig].lambda; }

    std::vector<BlockIndex> all_blocks() const {
        std::vector<BlockIndex> out;
        for (int e = 0; e < eig_count(); ++e)
            for (int h = 0; h < mini_count(e); ++h) out.push_back({e, h});
        return out;
    }

    std::vector<BlockIndex> unstable_blocks() const {
        std::vector<BlockIndex> out;
        for (int e = 0; e < unstable_count(); ++e)
            for (int h = 0; h < mini_count(e); ++h) out.push_back({e, h});
        return out;
    }
};

/// One bidiagonal Jordan miniblock: lambda on the diagonal, ones on the superdiagonal.
inline Matrix jordan_miniblock(double lambda, int dim) {
    Matrix m = Matrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        m(i, i) = lambda;
        if (i + 1 < dim) m(i, i + 1) = 1.0;
    }
    return m;
}

/// Block-diagonal assembly of the full system matrix. Off-block entries are exact zeros.
inline Matrix assemble_A(const JordanSpec& spec) {
    const int n = spec.total_dim();
    Matrix a = Matrix::Zero(n, n);
    for (BlockIndex b : spec.all_blocks()) {
        const int off = spec.offset(b);
        const int d = spec.dim(b);
        a.block(off, off, d, d) = jordan_miniblock(spec.lambda_of(b), d);
    }
    return a;
}

/// Plant in Jordan coordinates: x(t+1) = A x(t) + B u(t).
struct SystemModel {
    JordanSpec jordan;
    Matrix B;  // n x m; m == 0 means no input channel

    int state_dim() const { return jordan.total_dim(); }
    int input_dim() const { return static_cast<int>(B.cols()); }
    Matrix A() const { return assemble_A(jordan); }
};

/// Per-agent output maps y_i = C_i x, with block columns aligned to the Jordan partition.
struct AgentOutputs {
    std::vector<Matrix> C;

    int agent_count() const { return static_cast<int>(C.size()); }
    int output_dim(int agent) const { return static_cast<int>(C[agent].rows()); }

    /// The p_i x d block of C_i over miniblock `b`.
    Matrix block(int agent, BlockIndex b, const JordanSpec& spec) const {
        return C[agent].middleCols(spec.offset(b), spec.dim(b));
    }
};

/// Weighted digraph of sensor agents. adjacency(i,j) > 0 means agent i receives from j.
struct SensorNetwork {
    Matrix adjacency;
    bool directed = true;

    int agent_count() const { return static_cast<int>(adjacency.rows()); }

    std::vector<int> neighbors(int i) const {
        std::vector<int> out;
        for (int j = 0; j < agent_count(); ++j)
            if (j != i && adjacency(i, j) > 0.0) out.push_back(j);
        return out;
    }
};

/// In-degree Laplacian D - A; every row sums to zero up to accumulation error.
inline Matrix laplacian(const SensorNetwork& net) {
    const int n = net.agent_count();
    Matrix l = -net.adjacency;
    for (int i = 0; i < n; ++i) l(i, i) = net.adjacency.row(i).sum();
    return l;
}

struct Violation {
    std::string where;
    std::string message;
};

/// Aggregates every structural invariant of the three input types plus their
/// cross-consistency. Returns an empty list iff the instance is well formed.
inline std::vector<Violation> validate(const SystemModel& system, const AgentOutputs& outputs,
                                       const SensorNetwork& net) {
    std::vector<Violation> v;
    const JordanSpec& spec = system.jordan;

    if (spec.eig_count() == 0) v.push_back({"system.eigens", "no eigenvalues given"});
    for (int e = 0; e < spec.eig_count(); ++e) {
        if (spec.mini_count(e) == 0)
            v.push_back({"system.eigens[" + std::to_string(e + 1) + "]", "eigenvalue has no miniblocks"});
        for (int h = 0; h < spec.mini_count(e); ++h)
            if (spec.eigens[e].miniblock_dims[h] < 1)
                v.push_back({"system.eigens[" + std::to_string(e + 1) + "].dims",
                             "miniblock dimension must be positive"});
        if (!std::isfinite(spec.lambda_of(e)))
            v.push_back({"system.eigens[" + std::to_string(e + 1) + "].lambda", "eigenvalue is not finite"});
        for (int f = e + 1; f < spec.eig_count(); ++f)
            if (spec.lambda_of(e) == spec.lambda_of(f))
                v.push_back({"system.eigens", "eigenvalues must be pairwise distinct (" +
                                                  std::to_string(spec.lambda_of(e)) + " repeated)"});
    }
    // Unstable eigenvalues must form a prefix.
    bool seen_stable = false;
    for (int e = 0; e < spec.eig_count(); ++e) {
        if (!spec.unstable(e)) seen_stable = true;
        else if (seen_stable)
            v.push_back({"system.eigens", "eigenvalues with |lambda| >= 1 must precede stable ones"});
    }

    const int n = spec.total_dim();
    if (n == 0) v.push_back({"system", "state dimension is zero"});

    if (system.B.size() > 0 && system.B.rows() != n)
        v.push_back({"system.B", "B has " + std::to_string(system.B.rows()) + " rows, expected " +
                                     std::to_string(n)});

    for (int i = 0; i < outputs.agent_count(); ++i) {
        if (outputs.C[i].rows() < 1)
            v.push_back({"agents[" + std::to_string(i + 1) + "].C", "output matrix has no rows"});
        if (outputs.C[i].cols() != n)
            v.push_back({"agents[" + std::to_string(i + 1) + "].C",
                         "output width mismatch: " + std::to_string(outputs.C[i].cols()) + " columns, expected " +
                             std::to_string(n)});
    }

    const int N = net.agent_count();
    if (net.adjacency.rows() != net.adjacency.cols())
        v.push_back({"network.adjacency", "adjacency matrix is not square"});
    if (N != outputs.agent_count())
        v.push_back({"network", "agent count " + std::to_string(N) + " does not match " +
                                    std::to_string(outputs.agent_count()) + " output matrices"});
    for (int i = 0; i < N && net.adjacency.rows() == net.adjacency.cols(); ++i) {
        if (net.adjacency(i, i) != 0.0)
            v.push_back({"network.adjacency", "nonzero diagonal at agent " + std::to_string(i + 1)});
        for (int j = 0; j < N; ++j) {
            if (net.adjacency(i, j) < 0.0)
                v.push_back({"network.adjacency", "negative weight at (" + std::to_string(i + 1) + "," +
                                                      std::to_string(j + 1) + ")"});
            if (!net.directed && net.adjacency(i, j) != net.adjacency(j, i)) {
                v.push_back({"network.adjacency", "undirected network requires a symmetric adjacency matrix"});
                i = N;  // one report is enough
                break;
            }
        }
    }
    return v;
}

}  // namespace distobs
