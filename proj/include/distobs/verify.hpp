#pragma once

#include "distobs/random_instance.hpp"
#include "distobs/solvability.hpp"

#include <random>

namespace distobs {

/// Cross-check of the spectral admissibility condition against the brute-force
/// Schur test of the assembled error matrix, at one gain value.
///
/// The check is skipped when the gain sits within `boundary_margin` of an
/// interval endpoint or when the predicted radius is within `radius_margin`
/// of 1: there the strict inequality is numerically undecidable.
struct ConditionOracleCheck {
    bool skipped = false;
    bool agree = false;
    bool condition_feasible = false;
    bool oracle_schur = false;
    double predicted_radius = 0.0;
    double oracle_radius = 0.0;
};

inline ConditionOracleCheck check_condition_vs_oracle(int strategy, const Matrix& laplacian_sub,
                                                  const SelectionStack& stack, double lambda, double k,
                                                  double boundary_margin = 1e-3,
                                                  double radius_margin = 1e-6) {
    ConditionOracleCheck out;
    const ComplexVec values =
        strategy == 1 ? strategy1_spectrum(laplacian_sub, stack) : spectrum(laplacian_sub);
    const GainInterval interval = feasible_gain(values, lambda).interval;

    out.predicted_radius = 0.0;
    for (const Complex& mu : values)
        out.predicted_radius = std::max(out.predicted_radius, std::abs(lambda) * std::abs(1.0 - k * mu));

    if (std::abs(out.predicted_radius - 1.0) < radius_margin) {
        out.skipped = true;
        return out;
    }
    if (!interval.empty &&
        (std::abs(k - interval.lo) < boundary_margin || std::abs(k - interval.hi) < boundary_margin)) {
        out.skipped = true;
        return out;
    }
    out.condition_feasible = interval.contains(k);
    out.oracle_radius = schur_radius(assemble_error_matrix(strategy, laplacian_sub, stack, lambda, k));
    out.oracle_schur = out.oracle_radius < 1.0;
    out.agree = out.condition_feasible == out.oracle_schur;
    return out;
}

struct FuzzSummary {
    int instances = 0;
    int checks_per_strategy[2] = {0, 0};
    int agreements_per_strategy[2] = {0, 0};
    int skipped = 0;
    int split_checks = 0;
    int split_failures = 0;

    int checks() const { return checks_per_strategy[0] + checks_per_strategy[1]; }
    int agreements() const { return agreements_per_strategy[0] + agreements_per_strategy[1]; }
    bool all_ok() const { return agreements() == checks() && split_failures == 0; }
};

/// Randomized verification drive: per instance, per unstable miniblock and per
/// strategy, samples gains off the interval boundaries and compares the
/// spectral verdict with the Schur oracle; also runs the spectrum-split check.
inline FuzzSummary run_fuzz_verification(int instances, std::uint64_t seed,
                                         const RandomInstanceOptions& opts = {},
                                         int gains_per_block = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FuzzSummary summary;

    while (summary.instances < instances) {
        const RandomInstance inst = random_instance(rng, opts);
        if (!validate(inst.system, inst.outputs, inst.net).empty()) continue;
        const MiniblockClassification cls = classify(inst.system, inst.outputs);
        const Matrix lap = laplacian(inst.net);
        ++summary.instances;

        for (BlockIndex b : inst.system.jordan.unstable_blocks()) {
            const SelectionStack stack = build_selection_stack(inst.system.jordan, cls, b);
            if (stack.agents.empty()) continue;
            const Matrix l_sub = laplacian_submatrix(lap, cls.v_set(b, ObsClass::Complete));
            const double lambda = inst.system.jordan.lambda_of(b);

            for (int strategy : {1, 2}) {
                for (int g = 0; g < gains_per_block; ++g) {
                    const double k = -0.5 + 3.0 * unit(rng);
                    const ConditionOracleCheck chk =
                        check_condition_vs_oracle(strategy, l_sub, stack, lambda, k);
                    if (chk.skipped) {
                        ++summary.skipped;
                        continue;
                    }
                    ++summary.checks_per_strategy[strategy - 1];
                    if (chk.agree) ++summary.agreements_per_strategy[strategy - 1];
                }
            }
            const double k = -0.5 + 3.0 * unit(rng);
            ++summary.split_checks;
            if (!spectrum_split_check(stack, l_sub, lambda, k)) ++summary.split_failures;
        }
    }
    return summary;
}

}  // namespace distobs
