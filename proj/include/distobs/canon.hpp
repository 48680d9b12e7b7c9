#pragma once

#include "distobs/classify.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace distobs {

/// Per-agent Kalman detectability form reached by a pure state permutation.
///
/// With P the permutation whose k-th column is the unit vector of perm[k],
///   P^T A P = [A_undet  A_coupling; 0  A_det],   C_i P = [0  C_det],
/// where the undetectable coordinates are the completely unobserved miniblocks
/// followed by the unobserved heads of the partly observable ones, and the
/// detectable coordinates are the observable tails, the completely observable
/// miniblocks, and the full stable part.
struct DetectabilityForm {
    int agent = 0;
    std::vector<int> perm;  // perm[k] = original state index of permuted coordinate k
    int n_undet = 0;
    int n_det = 0;
    Matrix A_undet, A_coupling, A_det;
    Matrix B_undet, B_det;
    Matrix C_det;
    std::vector<BlockIndex> undet_block;  // owner miniblock of each undetectable coordinate
    std::uint64_t checksum = 0;

    int undet_state(int k) const { return perm[k]; }
    int det_state(int k) const { return perm[n_undet + k]; }
};

/// Per-agent block-diagonal split used by the augmented observer: whole
/// miniblocks that are not completely observable form the consensus part,
/// the completely observable miniblocks plus the stable part form the rest.
/// No miniblock is split, so R^T A R is exactly block diagonal.
struct AugmentedForm {
    int agent = 0;
    std::vector<int> perm;
    int n_consensus = 0;
    int n_det = 0;
    Matrix A_consensus, A_det;
    Matrix B_consensus, B_det;
    Matrix C_det;
    std::vector<BlockIndex> consensus_block;
    /// The detectable estimate of the Luenberger observer covers the observable
    /// tails too; dropping the first `selector_offset` entries of that estimate
    /// yields the estimate of the detectable coordinates here.
    int selector_offset = 0;
    std::uint64_t checksum = 0;

    int consensus_state(int k) const { return perm[k]; }
    int det_state(int k) const { return perm[n_consensus + k]; }
};

namespace detail {

inline void require_fresh(const SystemModel& system, const AgentOutputs& outputs,
                          const MiniblockClassification& cls) {
    if (cls.checksum != instance_checksum(system, outputs))
        throw std::runtime_error("classification is stale for these inputs (checksum mismatch)");
}

inline void append_block_range(std::vector<int>& perm, const JordanSpec& spec, BlockIndex b, int from,
                               int to) {
    const int off = spec.offset(b);
    for (int k = from; k < to; ++k) perm.push_back(off + k);
}

template <typename Gather>
inline Matrix gather_square(const Matrix& a, const std::vector<int>& perm, int row0, int rows, int col0,
                            int cols, Gather&&) {
    Matrix out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out(r, c) = a(perm[row0 + r], perm[col0 + c]);
    return out;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<int>& perm, int from, int count) {
    Matrix out(count, m.cols());
    for (int r = 0; r < count; ++r) out.row(r) = m.row(perm[from + r]);
    return out;
}

inline Matrix gather_cols(const Matrix& m, const std::vector<int>& perm, int from, int count) {
    Matrix out(m.rows(), count);
    for (int c = 0; c < count; ++c) out.col(c) = m.col(perm[from + c]);
    return out;
}

}  // namespace detail

/// Builds the Strategy-1 permutation and extracts every named block for one agent.
/// Requires Assumptions 1 and 2 to have been verified on the same classification.
inline DetectabilityForm build_detectability_form(const SystemModel& system, const AgentOutputs& outputs,
                                                  const MiniblockClassification& cls, int agent) {
    detail::require_fresh(system, outputs, cls);
    const JordanSpec& spec = system.jordan;
    const int n = spec.total_dim();
    const int r_u = spec.unstable_count();

    DetectabilityForm f;
    f.agent = agent;
    f.checksum = cls.checksum;
    f.perm.reserve(n);

    // Undetectable part: whole unobserved miniblocks, then unobserved heads.
    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Unobserved)) {
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
            for (int k = 0; k < spec.dim({e, h}); ++k) f.undet_block.push_back({e, h});
        }
    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Partial)) {
            const int t = *cls.t_of(agent, {e, h});
            detail::append_block_range(f.perm, spec, {e, h}, 0, t - 1);
            for (int k = 0; k < t - 1; ++k) f.undet_block.push_back({e, h});
        }
    f.n_undet = static_cast<int>(f.perm.size());

    // Detectable part: observable tails, completely observable blocks, stable part.
    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Partial))
            detail::append_block_range(f.perm, spec, {e, h}, *cls.t_of(agent, {e, h}) - 1, spec.dim({e, h}));
    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Complete))
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
    for (int e = r_u; e < spec.eig_count(); ++e)
        for (int h = 0; h < spec.mini_count(e); ++h)
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
    f.n_det = n - f.n_undet;

    const Matrix a = assemble_A(spec);
    f.A_undet = detail::gather_square(a, f.perm, 0, f.n_undet, 0, f.n_undet, 0);
    f.A_coupling = detail::gather_square(a, f.perm, 0, f.n_undet, f.n_undet, f.n_det, 0);
    f.A_det = detail::gather_square(a, f.perm, f.n_undet, f.n_det, f.n_undet, f.n_det, 0);
    f.B_undet = detail::gather_rows(system.B, f.perm, 0, f.n_undet);
    f.B_det = detail::gather_rows(system.B, f.perm, f.n_undet, f.n_det);
    f.C_det = detail::gather_cols(outputs.C[agent], f.perm, f.n_undet, f.n_det);
    return f;
}

/// Builds the Strategy-2 permutation for one agent: whole miniblocks only.
inline AugmentedForm build_augmented_form(const SystemModel& system, const AgentOutputs& outputs,
                                          const MiniblockClassification& cls, int agent) {
    detail::require_fresh(system, outputs, cls);
    const JordanSpec& spec = system.jordan;
    const int n = spec.total_dim();
    const int r_u = spec.unstable_count();

    AugmentedForm f;
    f.agent = agent;
    f.checksum = cls.checksum;
    f.perm.reserve(n);

    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Unobserved)) {
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
            for (int k = 0; k < spec.dim({e, h}); ++k) f.consensus_block.push_back({e, h});
        }
    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Partial)) {
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
            for (int k = 0; k < spec.dim({e, h}); ++k) f.consensus_block.push_back({e, h});
            f.selector_offset += spec.dim({e, h}) - (*cls.t_of(agent, {e, h}) - 1);
        }
    f.n_consensus = static_cast<int>(f.perm.size());

    for (int e = 0; e < r_u; ++e)
        for (int h : cls.g_set(agent, e, ObsClass::Complete))
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
    for (int e = r_u; e < spec.eig_count(); ++e)
        for (int h = 0; h < spec.mini_count(e); ++h)
            detail::append_block_range(f.perm, spec, {e, h}, 0, spec.dim({e, h}));
    f.n_det = n - f.n_consensus;

    const Matrix a = assemble_A(spec);
    f.A_consensus = detail::gather_square(a, f.perm, 0, f.n_consensus, 0, f.n_consensus, 0);
    f.A_det = detail::gather_square(a, f.perm, f.n_consensus, f.n_det, f.n_consensus, f.n_det, 0);
    f.B_consensus = detail::gather_rows(system.B, f.perm, 0, f.n_consensus);
    f.B_det = detail::gather_rows(system.B, f.perm, f.n_consensus, f.n_det);
    f.C_det = detail::gather_cols(outputs.C[agent], f.perm, f.n_consensus, f.n_det);
    return f;
}

struct VerifyResult {
    bool ok = true;
    std::string detail;
};

namespace detail {

inline bool is_permutation(const std::vector<int>& perm, int n) {
    if (static_cast<int>(perm.size()) != n) return false;
    std::vector<bool> seen(n, false);
    for (int p : perm) {
        if (p < 0 || p >= n || seen[p]) return false;
        seen[p] = true;
    }
    return true;
}

/// PBH rank test of (A_det, C_det) at the given real eigenvalues.
inline VerifyResult pbh_detectable(const Matrix& a, const Matrix& c, const std::vector<double>& lambdas,
                                   double rank_tol) {
    const Eigen::Index nd = a.rows();
    for (double s : lambdas) {
        Matrix pencil(nd + c.rows(), nd);
        pencil.topRows(nd) = s * Matrix::Identity(nd, nd) - a;
        pencil.bottomRows(c.rows()) = c;
        if (numeric_rank(pencil, rank_tol) < nd)
            return {false, "PBH rank deficiency at eigenvalue " + std::to_string(s)};
    }
    return {};
}

inline std::vector<double> unstable_lambdas_in_det_part(const JordanSpec& spec,
                                                        const MiniblockClassification& cls, int agent) {
    std::vector<double> out;
    for (int e = 0; e < spec.unstable_count(); ++e) {
        bool present = !cls.g_set(agent, e, ObsClass::Partial).empty() ||
                       !cls.g_set(agent, e, ObsClass::Complete).empty();
        if (present) out.push_back(spec.lambda_of(e));
    }
    return out;
}

}  // namespace detail

/// Reassembles the permuted matrices from the index map and checks the exact
/// block sparsity pattern, block equality, and PBH detectability of the
/// detectable pair. Returns a located mismatch description on failure.
inline VerifyResult verify_form(const DetectabilityForm& f, const SystemModel& system,
                                const AgentOutputs& outputs, const MiniblockClassification& cls,
                                double rank_tol = 1e-9) {
    const int n = system.jordan.total_dim();
    if (!detail::is_permutation(f.perm, n)) return {false, "index map is not a permutation of the state"};
    if (f.n_undet + f.n_det != n) return {false, "partition sizes do not sum to the state dimension"};

    const Matrix a = assemble_A(system.jordan);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double got = a(f.perm[r], f.perm[c]);
            double want;
            if (r < f.n_undet && c < f.n_undet) want = f.A_undet(r, c);
            else if (r < f.n_undet) want = f.A_coupling(r, c - f.n_undet);
            else if (c < f.n_undet) want = 0.0;  // exact zero lower-left block
            else want = f.A_det(r - f.n_undet, c - f.n_undet);
            if (got != want)
                return {false, "permuted A mismatch at permuted entry (" + std::to_string(r + 1) + "," +
                                   std::to_string(c + 1) + ")"};
        }
    const Matrix& ci = outputs.C[f.agent];
    for (Eigen::Index r = 0; r < ci.rows(); ++r)
        for (int c = 0; c < n; ++c) {
            const double got = ci(r, f.perm[c]);
            const double want = c < f.n_undet ? 0.0 : f.C_det(r, c - f.n_undet);
            if (got != want)
                return {false, "permuted C mismatch at permuted column " + std::to_string(c + 1)};
        }
    return detail::pbh_detectable(f.A_det, f.C_det,
                                  detail::unstable_lambdas_in_det_part(system.jordan, cls, f.agent),
                                  rank_tol);
}

inline VerifyResult verify_form(const AugmentedForm& f, const SystemModel& system,
                                const AgentOutputs& outputs) {
    const int n = system.jordan.total_dim();
    if (!detail::is_permutation(f.perm, n)) return {false, "index map is not a permutation of the state"};
    if (f.n_consensus + f.n_det != n) return {false, "partition sizes do not sum to the state dimension"};

    const Matrix a = assemble_A(system.jordan);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double got = a(f.perm[r], f.perm[c]);
            double want;
            if (r < f.n_consensus && c < f.n_consensus) want = f.A_consensus(r, c);
            else if (r >= f.n_consensus && c >= f.n_consensus)
                want = f.A_det(r - f.n_consensus, c - f.n_consensus);
            else want = 0.0;  // exact zeros off the diagonal blocks
            if (got != want)
                return {false, "permuted A mismatch at permuted entry (" + std::to_string(r + 1) + "," +
                                   std::to_string(c + 1) + ")"};
        }
    const Matrix& ci = outputs.C[f.agent];
    for (Eigen::Index r = 0; r < ci.rows(); ++r)
        for (int c = f.n_consensus; c < n; ++c)
            if (ci(r, f.perm[c]) != f.C_det(r, c - f.n_consensus))
                return {false, "permuted C mismatch at permuted column " + std::to_string(c + 1)};
    return {};
}

}  // namespace distobs
