#pragma once

#include "distobs/classify.hpp"

#include <limits>
#include <map>
#include <optional>
#include <string>

namespace distobs {

/// Open interval of admissible coupling gains.
struct GainInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool empty = true;

    static GainInterval whole_line() {
        return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), false};
    }
    static GainInterval between(double lo, double hi) {
        if (!(lo < hi)) return {};
        return {lo, hi, false};
    }
    bool contains(double k) const { return !empty && lo < k && k < hi; }
    GainInterval intersect(const GainInterval& other) const {
        if (empty || other.empty) return {};
        return between(std::max(lo, other.lo), std::min(hi, other.hi));
    }
};

/// Row-selection structure of one unstable miniblock: which agents must estimate
/// it through consensus and how many leading entries each of them is missing.
///
/// `agents` lists the incompletely observing agents ascending; `rows[p]` is the
/// number of undetected leading entries for agents[p] (the full block dimension
/// for completely unobserved agents, t-1 for partly observing ones).
/// `nested[q]` lists the positions p with rows[p] >= q+1; the nested selections
/// realize the spectrum split of the selected Kronecker error matrix.
struct SelectionStack {
    BlockIndex block;
    int block_dim = 0;
    std::vector<int> agents;
    std::vector<int> rows;
    std::vector<std::vector<int>> nested;

    int total_rows() const {
        int s = 0;
        for (int r : rows) s += r;
        return s;
    }
};

inline SelectionStack build_selection_stack(const JordanSpec& spec, const MiniblockClassification& cls,
                                            BlockIndex block) {
    SelectionStack s;
    s.block = block;
    s.block_dim = spec.dim(block);
    s.agents = cls.v_incomplete(block);
    for (int agent : s.agents) {
        auto t = cls.t_of(agent, block);
        s.rows.push_back(t ? *t - 1 : s.block_dim);
    }
    s.nested.resize(s.block_dim);
    for (int q = 0; q < s.block_dim; ++q)
        for (std::size_t p = 0; p < s.rows.size(); ++p)
            if (s.rows[p] >= q + 1) s.nested[q].push_back(static_cast<int>(p));
    return s;
}

/// Principal submatrix of the Laplacian on the complement of the completely
/// observing agents, original agent order preserved. Empty complement gives 0x0.
inline Matrix laplacian_submatrix(const Matrix& laplacian_full, const std::vector<int>& v_complete) {
    std::vector<int> keep;
    std::vector<bool> drop(static_cast<std::size_t>(laplacian_full.rows()), false);
    for (int i : v_complete) drop[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < laplacian_full.rows(); ++i)
        if (!drop[static_cast<std::size_t>(i)]) keep.push_back(i);
    return principal_submatrix(laplacian_full, keep);
}

/// Spectrum (with multiplicities) of the selected Kronecker matrix
/// S ((L ⊗ I) ) S^T, computed as the union of the spectra of the nested
/// principal submatrices of L, never by forming the Kronecker product.
inline ComplexVec strategy1_spectrum(const Matrix& laplacian_sub, const SelectionStack& stack) {
    ComplexVec out;
    for (const std::vector<int>& sel : stack.nested) {
        if (sel.empty()) continue;
        ComplexVec part = spectrum(principal_submatrix(laplacian_sub, sel));
        out.insert(out.end(), part.begin(), part.end());
    }
    sort_complex(out);
    return out;
}

struct GainSolve {
    GainInterval interval;
    bool zero_eigenvalue = false;  // some mu is (numerically) zero: no spanning forest into the block
};

/// Admissible real gains k with |1 - k mu| < 1/|lambda| for every mu in the
/// spectrum. Each mu contributes the solution interval of the real quadratic
///   |mu|^2 k^2 - 2 Re(mu) k + 1 - 1/lambda^2 < 0,
/// and the result is the intersection. |lambda| must be >= 1.
inline GainSolve feasible_gain(const ComplexVec& spectrum_values, double lambda) {
    const double abs_l = std::abs(lambda);
    GainSolve out;
    out.interval = GainInterval::whole_line();

    double scale = 0.0;
    for (const Complex& mu : spectrum_values) scale = std::max(scale, std::abs(mu));

    for (const Complex& mu : spectrum_values) {
        if (std::abs(mu) <= 1e-9 * (1.0 + scale)) {
            out.zero_eigenvalue = true;
            out.interval = {};
            return out;
        }
        const double m2 = std::norm(mu);
        const double re = mu.real();
        const double c = 1.0 - 1.0 / (abs_l * abs_l);
        const double disc = re * re - m2 * c;
        if (disc <= 0.0) {
            out.interval = {};
            return out;
        }
        const double s = std::sqrt(disc);
        out.interval = out.interval.intersect(GainInterval::between((re - s) / m2, (re + s) / m2));
        if (out.interval.empty) return out;
    }
    return out;
}

struct UndirectedFeasibility {
    bool ratio_ok = false;
    GainInterval interval;
    double mu_min = 0.0;
    double mu_max = 0.0;
    bool positive_definite = false;  // min eigenvalue > 0, i.e. connected into the observing set
};

/// Closed-form admissibility for symmetric Laplacian submatrices: the gain set
/// is ((1 - 1/|lambda|)/mu_min, (1 + 1/|lambda|)/mu_max), nonempty iff
/// mu_max/mu_min < (|lambda|+1)/(|lambda|-1) (vacuous at |lambda| = 1).
inline UndirectedFeasibility undirected_feasibility(const Matrix& laplacian_sub, double lambda,
                                                    double sym_tol = 1e-12) {
    const double abs_l = std::abs(lambda);
    UndirectedFeasibility out;
    if (laplacian_sub.rows() == 0) {
        out.ratio_ok = true;
        out.interval = GainInterval::whole_line();
        out.positive_definite = true;
        return out;
    }
    const double asym = max_abs(laplacian_sub - laplacian_sub.transpose());
    if (asym > sym_tol * (1.0 + max_abs(laplacian_sub)))
        throw std::invalid_argument("undirected_feasibility requires a symmetric matrix");

    std::vector<double> mu = symmetric_spectrum(laplacian_sub);
    out.mu_min = mu.front();
    out.mu_max = mu.back();
    out.positive_definite = out.mu_min > 1e-9 * (1.0 + out.mu_max);
    if (!out.positive_definite) {
        out.ratio_ok = false;
        out.interval = {};
        return out;
    }
    out.ratio_ok = abs_l == 1.0 ? true : out.mu_max / out.mu_min < (abs_l + 1.0) / (abs_l - 1.0);
    out.interval = GainInterval::between((1.0 - 1.0 / abs_l) / out.mu_min, (1.0 + 1.0 / abs_l) / out.mu_max);
    return out;
}

/// Spectral radius by a dense eigenvalue solve; the matrix is Schur iff < 1.
inline double schur_radius(const Matrix& m) { return spectral_radius(m); }

namespace detail {

inline std::vector<int> stack_selected_indices(const SelectionStack& stack) {
    std::vector<int> idx;
    for (std::size_t p = 0; p < stack.rows.size(); ++p)
        for (int q = 0; q < stack.rows[p]; ++q)
            idx.push_back(static_cast<int>(p) * stack.block_dim + q);
    return idx;
}

}  // namespace detail

/// Error-dynamics matrix of one miniblock at gain k. Strategy 1 selects the
/// undetected rows of (I - kL) ⊗ A; Strategy 2 keeps the whole product. This is
/// the oracle input for schur_radius.
inline Matrix assemble_error_matrix(int strategy, const Matrix& laplacian_sub, const SelectionStack& stack,
                                    double lambda, double k) {
    const Eigen::Index c = laplacian_sub.rows();
    const Matrix gamma = Matrix::Identity(c, c) - k * laplacian_sub;
    const Matrix full = kronecker(gamma, jordan_miniblock(lambda, stack.block_dim));
    if (strategy == 2) return full;
    const std::vector<int> idx = detail::stack_selected_indices(stack);
    return principal_submatrix(full, idx);
}

/// Checks that the spectrum of the selected Kronecker matrix equals the union
/// over the nested selections of sigma(lambda S~ (I - kL) S~^T) as multisets.
///
/// The selected Kronecker matrix has defective eigenvalues (chains up to the
/// block dimension), so eigensolving it directly is only accurate to about
/// eps^(1/d). Instead this reorders the assembled matrix by the canonical
/// level-major permutation, which must make it exactly block upper triangular
/// with diagonal blocks exactly equal to lambda S~ (I - kL) S~^T; both facts
/// are pure reindexings of identical floating-point products and are checked
/// entry for entry. The spectra of the diagonal blocks, read out of the
/// assembled matrix, are then matched against the independently built
/// right-hand matrices within the eigenvalue-matching tolerance.
inline bool spectrum_split_check(const SelectionStack& stack, const Matrix& laplacian_sub, double lambda,
                                 double k, double eig_match_rel = 1e-7) {
    const Matrix m = assemble_error_matrix(1, laplacian_sub, stack, lambda, k);
    const Eigen::Index c = laplacian_sub.rows();
    const Matrix gamma = Matrix::Identity(c, c) - k * laplacian_sub;

    std::vector<int> prefix(stack.rows.size() + 1, 0);
    for (std::size_t p = 0; p < stack.rows.size(); ++p) prefix[p + 1] = prefix[p] + stack.rows[p];

    // Level-major reordering: perm[new] = assembled-matrix index, tagged with
    // the level and the member position within that level's selection.
    std::vector<int> perm, level_of, member_of;
    for (int q = 0; q < stack.block_dim; ++q) {
        const std::vector<int>& sel = stack.nested[static_cast<std::size_t>(q)];
        for (std::size_t j = 0; j < sel.size(); ++j) {
            perm.push_back(prefix[static_cast<std::size_t>(sel[j])] + q);
            level_of.push_back(q);
            member_of.push_back(static_cast<int>(j));
        }
    }
    if (static_cast<Eigen::Index>(perm.size()) != m.rows()) return false;

    for (std::size_t r = 0; r < perm.size(); ++r)
        for (std::size_t col = 0; col < perm.size(); ++col) {
            const double got = m(perm[r], perm[col]);
            if (level_of[r] > level_of[col]) {
                if (got != 0.0) return false;
            } else if (level_of[r] == level_of[col]) {
                const std::vector<int>& sel = stack.nested[static_cast<std::size_t>(level_of[r])];
                const double expect = lambda * gamma(sel[static_cast<std::size_t>(member_of[r])],
                                                     sel[static_cast<std::size_t>(member_of[col])]);
                if (got != expect) return false;
            }
        }

    ComplexVec left, right;
    std::size_t pos = 0;
    for (int q = 0; q < stack.block_dim; ++q) {
        const std::vector<int>& sel = stack.nested[static_cast<std::size_t>(q)];
        if (sel.empty()) continue;
        Matrix diag_block(static_cast<Eigen::Index>(sel.size()), static_cast<Eigen::Index>(sel.size()));
        for (std::size_t a = 0; a < sel.size(); ++a)
            for (std::size_t b = 0; b < sel.size(); ++b)
                diag_block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    m(perm[pos + a], perm[pos + b]);
        ComplexVec l = spectrum(diag_block);
        left.insert(left.end(), l.begin(), l.end());
        ComplexVec rr = spectrum(lambda * principal_submatrix(gamma, sel));
        right.insert(right.end(), rr.begin(), rr.end());
        pos += sel.size();
    }
    return multiset_match(left, right, eig_match_tolerance(left, right, eig_match_rel));
}

/// Solvability data of one unstable miniblock.
struct BlockSolvability {
    BlockIndex block;
    double lambda = 0.0;
    int dim = 0;
    bool gain_needed = false;  // false when every agent observes the block completely
    SelectionStack stack;
    Matrix laplacian_sub;
    ComplexVec strategy1_values;  // sigma(S (L ⊗ I) S^T), with multiplicities
    ComplexVec strategy2_values;  // sigma(L_sub)
    GainInterval strategy1_interval;
    GainInterval strategy2_interval;
    bool strategy1_feasible = false;
    bool strategy2_feasible = false;
    bool zero_eigenvalue = false;
    bool spanning_forest = false;  // all consensus agents reachable from fully observing ones
    std::optional<UndirectedFeasibility> undirected;
    std::string diagnostic;
};

struct SolvabilityReport {
    std::vector<BlockSolvability> blocks;
    bool strategy1_feasible = true;
    bool strategy2_feasible = true;

    const BlockSolvability& block(BlockIndex b) const {
        for (const BlockSolvability& bs : blocks)
            if (bs.block == b) return bs;
        throw std::out_of_range("no such block in the solvability report");
    }
    const GainInterval& interval(BlockIndex b, int strategy) const {
        return strategy == 1 ? block(b).strategy1_interval : block(b).strategy2_interval;
    }
};

namespace detail {

/// True iff every agent in `targets` is reachable from some agent in `sources`
/// following directed edges (information flows j -> i when adjacency(i,j) > 0).
inline bool reachable_from(const SensorNetwork& net, const std::vector<int>& sources,
                           const std::vector<int>& targets) {
    const int N = net.agent_count();
    std::vector<bool> seen(N, false);
    std::vector<int> queue;
    for (int s : sources)
        if (!seen[s]) {
            seen[s] = true;
            queue.push_back(s);
        }
    for (std::size_t q = 0; q < queue.size(); ++q) {
        const int j = queue[q];
        for (int i = 0; i < N; ++i)
            if (!seen[i] && net.adjacency(i, j) > 0.0) {
                seen[i] = true;
                queue.push_back(i);
            }
    }
    for (int t : targets)
        if (!seen[t]) return false;
    return true;
}

}  // namespace detail

/// Evaluates the spectral feasibility conditions for every unstable miniblock
/// and both strategies, with the undirected closed form when applicable.
inline SolvabilityReport build_report(const SystemModel& system, const AgentOutputs& outputs,
                                      const SensorNetwork& net, const MiniblockClassification& cls) {
    detail::require_fresh(system, outputs, cls);
    const JordanSpec& spec = system.jordan;
    const Matrix lap = laplacian(net);

    SolvabilityReport report;
    for (BlockIndex b : spec.unstable_blocks()) {
        BlockSolvability bs;
        bs.block = b;
        bs.lambda = spec.lambda_of(b);
        bs.dim = spec.dim(b);
        bs.stack = build_selection_stack(spec, cls, b);
        bs.gain_needed = !bs.stack.agents.empty();
        if (!bs.gain_needed) {
            bs.strategy1_feasible = bs.strategy2_feasible = true;
            bs.spanning_forest = true;
            bs.strategy1_interval = bs.strategy2_interval = GainInterval::whole_line();
            bs.diagnostic = "no gain needed: block completely observable for every agent";
            report.blocks.push_back(std::move(bs));
            continue;
        }
        bs.laplacian_sub = laplacian_submatrix(lap, cls.v_set(b, ObsClass::Complete));
        bs.strategy2_values = spectrum(bs.laplacian_sub);
        bs.strategy1_values = strategy1_spectrum(bs.laplacian_sub, bs.stack);

        const GainSolve s1 = feasible_gain(bs.strategy1_values, bs.lambda);
        const GainSolve s2 = feasible_gain(bs.strategy2_values, bs.lambda);
        bs.strategy1_interval = s1.interval;
        bs.strategy2_interval = s2.interval;
        bs.zero_eigenvalue = s1.zero_eigenvalue || s2.zero_eigenvalue;
        bs.strategy1_feasible = !s1.interval.empty;
        bs.strategy2_feasible = !s2.interval.empty;
        bs.spanning_forest =
            detail::reachable_from(net, cls.v_set(b, ObsClass::Complete), bs.stack.agents);
        if (bs.zero_eigenvalue || !bs.spanning_forest)
            bs.diagnostic = "zero Laplacian eigenvalue: no spanning forest rooted in the fully observing agents";

        if (!net.directed) bs.undirected = undirected_feasibility(bs.laplacian_sub, bs.lambda);

        report.strategy1_feasible = report.strategy1_feasible && bs.strategy1_feasible;
        report.strategy2_feasible = report.strategy2_feasible && bs.strategy2_feasible;
        report.blocks.push_back(std::move(bs));
    }
    return report;
}

}  // namespace distobs
