#include "test_helpers.hpp"

#include <cmath>

using namespace distobs;

namespace {

struct Ref {
    SystemModel sys = testing::ref_system();
    AgentOutputs out = testing::ref_outputs();
    SensorNetwork net = testing::ref_network();
    MiniblockClassification cls;
    Ref() { cls = classify(sys, out); }
    ObserverBank bank(int strategy, std::map<BlockIndex, double> gains = testing::ref_gains()) const {
        return build_observers(sys, out, net, cls, strategy, gains, testing::ref_luenberger_policies());
    }
};

InputSignal sinusoid_input() {
    InputSignal sig;
    sig.kind = InputSignal::Sinusoid{Vector::Constant(1, 1.0), Vector::Constant(1, 0.05),
                                     Vector::Constant(1, 0.3)};
    return sig;
}

}  // namespace

TEST_CASE("exact tracking from a perfect initial estimate") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 3);
    for (int strategy : {1, 2}) {
        SimulationTrace trace =
            simulate(ref.bank(strategy), InputSignal{}, x0, InitialEstimate::truth(), 50);
        for (int t = 0; t <= 50; ++t) {
            const double xnorm = trace.x.col(t).norm();
            for (const Vector& err : trace.err_norm) REQUIRE(err(t) <= 1e-9 * (1.0 + xnorm));
        }
    }
}

TEST_CASE("reference simulation converges under both strategies") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 1);
    for (int strategy : {1, 2}) {
        SimulationTrace trace =
            simulate(ref.bank(strategy), InputSignal{}, x0, InitialEstimate::zero(), 500);
        std::vector<AgentMetrics> metrics = convergence_metrics(trace, 1e-4);
        for (const AgentMetrics& m : metrics) {
            REQUIRE(m.converged);
            REQUIRE(m.terminal_ratio < 1e-4);
            REQUIRE(m.settling_time.has_value());
        }
    }
}

TEST_CASE("stored error norms match their definition") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 5);
    SimulationTrace trace = simulate(ref.bank(1), InputSignal{}, x0, InitialEstimate::zero(), 100);
    for (int i = 0; i < 6; ++i)
        for (int t = 0; t <= 100; ++t) {
            const double recomputed =
                (trace.x.col(t) - trace.xhat[static_cast<std::size_t>(i)].col(t)).norm();
            REQUIRE(trace.err_norm[static_cast<std::size_t>(i)](t) ==
                    Approx(recomputed).epsilon(1e-12).margin(0.0));
        }
}

TEST_CASE("infeasible gain trips the divergence guard") {
    Ref ref;
    std::map<BlockIndex, double> bad = testing::ref_gains();
    bad[{0, 0}] = 2.0;  // outside (0, 0.8232)
    const Vector x0 = unit_sphere_sample(9, 1);
    REQUIRE_THROWS_AS(simulate(ref.bank(1, bad), InputSignal{}, x0, InitialEstimate::zero(), 400),
                      DivergenceError);
}

TEST_CASE("simulated stacked error follows the closed-loop matrix exactly") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 7);
    SimulateOptions opts;
    opts.keep_internal = true;
    for (int strategy : {1, 2}) {
        ObserverBank bank = ref.bank(strategy);
        ErrorDynamics dyn = closed_loop_error_matrix(bank);
        SimulationTrace trace = simulate(bank, InputSignal{}, x0, InitialEstimate::zero(), 50, opts);
        for (int t = 0; t < 50; ++t) {
            const Vector e_now = stacked_error(bank, dyn, trace, t);
            const Vector e_next = stacked_error(bank, dyn, trace, t + 1);
            const Vector predicted = dyn.M * e_now;
            REQUIRE((e_next - predicted).norm() <= 1e-9 * (1.0 + e_now.norm()));
        }
    }
}

TEST_CASE("error trajectories are invariant to the input signal") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 11);
    // The horizon keeps the driven state (which grows polynomially through the
    // integrator chains) small enough that cancellation noise stays below the
    // comparison threshold.
    const int horizon = 100;
    for (int strategy : {1, 2}) {
        ObserverBank bank = ref.bank(strategy);
        SimulationTrace quiet = simulate(bank, InputSignal{}, x0, InitialEstimate::zero(), horizon);
        SimulationTrace driven = simulate(bank, sinusoid_input(), x0, InitialEstimate::zero(), horizon);
        // The input moves the state but cancels out of the error recursions.
        REQUIRE(max_abs(quiet.x - driven.x) > 1e-3);
        for (int i = 0; i < 6; ++i)
            for (int t = 0; t <= horizon; ++t) {
                const double a = quiet.err_norm[static_cast<std::size_t>(i)](t);
                const double b = driven.err_norm[static_cast<std::size_t>(i)](t);
                REQUIRE(std::abs(a - b) <= 1e-9 * (1.0 + a));
            }
    }
}

TEST_CASE("tail decay is geometric at the closed-loop radius") {
    Ref ref;
    ObserverBank bank = ref.bank(1);
    const double rho = schur_radius(closed_loop_error_matrix(bank).M) + 0.02;
    const Vector x0 = unit_sphere_sample(9, 13);
    SimulationTrace trace = simulate(bank, InputSignal{}, x0, InitialEstimate::zero(), 200);
    // Log-linear slope over a window that sits past the transient but above
    // the floating-point floor of the error computation (the state grows
    // polynomially under the eigenvalue-1 chains, and the decayed error
    // eventually drowns in cancellation noise).
    for (const Vector& err : trace.err_norm) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int count = 0;
        for (int t = 30; t <= 110; ++t) {
            if (err(t) <= 1e-12) continue;
            const double x = static_cast<double>(t);
            const double y = std::log(err(t));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++count;
        }
        REQUIRE(count > 40);
        const double slope = (static_cast<double>(count) * sxy - sx * sy) /
                             (static_cast<double>(count) * sxx - sx * sx);
        REQUIRE(slope <= std::log(rho));
    }
}

TEST_CASE("convergence metrics") {
    SECTION("geometric half decay settles at step 10 for tol 1e-3") {
        SimulationTrace trace;
        trace.horizon = 20;
        trace.x = Matrix::Zero(1, 21);
        trace.err_norm = {Vector(21)};
        for (int t = 0; t <= 20; ++t) trace.err_norm[0](t) = std::pow(0.5, t);
        std::vector<AgentMetrics> m = convergence_metrics(trace, 1e-3);
        REQUIRE(m[0].converged);
        REQUIRE(m[0].settling_time == 10);
    }
    SECTION("diverging trace does not settle") {
        SimulationTrace trace;
        trace.horizon = 20;
        trace.x = Matrix::Zero(1, 21);
        trace.err_norm = {Vector(21)};
        for (int t = 0; t <= 20; ++t) trace.err_norm[0](t) = std::pow(1.5, t);
        std::vector<AgentMetrics> m = convergence_metrics(trace, 1e-3);
        REQUIRE(!m[0].converged);
        REQUIRE(!m[0].settling_time.has_value());
        REQUIRE(m[0].terminal_ratio > 1.0);
    }
    SECTION("zero initial error reports a zero ratio") {
        SimulationTrace trace;
        trace.horizon = 3;
        trace.x = Matrix::Zero(1, 4);
        trace.err_norm = {Vector::Zero(4)};
        std::vector<AgentMetrics> m = convergence_metrics(trace, 1e-3);
        REQUIRE(m[0].converged);
        REQUIRE(m[0].terminal_ratio == 0.0);
    }
}

TEST_CASE("zero-horizon trace holds only the initial sample") {
    Ref ref;
    const Vector x0 = unit_sphere_sample(9, 2);
    SimulationTrace trace = simulate(ref.bank(1), InputSignal{}, x0, InitialEstimate::zero(), 0);
    REQUIRE(trace.x.cols() == 1);
    std::vector<AgentMetrics> m = convergence_metrics(trace, 1e-4);
    for (const AgentMetrics& am : m) REQUIRE(am.terminal_ratio == Approx(1.0));
}

TEST_CASE("random feasible banks track their error matrix step for step") {
    std::mt19937_64 rng(2121);
    SimulateOptions opts;
    opts.keep_internal = true;
    int exercised = 0;
    for (int trial = 0; trial < 25 && exercised < 10; ++trial) {
        const RandomInstance inst = random_instance(rng);
        const MiniblockClassification cls = classify(inst.system, inst.outputs);
        const SolvabilityReport report = build_report(inst.system, inst.outputs, inst.net, cls);
        if (!report.strategy1_feasible || !report.strategy2_feasible) continue;
        const Vector x0 = unit_sphere_sample(inst.system.state_dim(), 1000 + trial);
        for (int strategy : {1, 2}) {
            const ObserverBank bank = build_observers(inst.system, inst.outputs, inst.net, cls,
                                                      strategy, pick_gains(report, strategy));
            const ErrorDynamics dyn = closed_loop_error_matrix(bank);
            const SimulationTrace trace =
                simulate(bank, InputSignal{}, x0, InitialEstimate::zero(), 25, opts);
            for (int t = 0; t < 25; ++t) {
                const Vector e = stacked_error(bank, dyn, trace, t);
                const Vector e_next = stacked_error(bank, dyn, trace, t + 1);
                // Relative to the working magnitude: the errors are differences
                // of quantities as large as the (exponentially growing) state.
                const double scale = 1.0 + e.norm() + trace.x.col(t).norm();
                REQUIRE((e_next - dyn.M * e).norm() <= 1e-9 * scale);
            }
        }
        ++exercised;
    }
    REQUIRE(exercised == 10);
}

TEST_CASE("step and sample inputs are accepted") {
    Ref ref;
    ObserverBank bank = ref.bank(2);
    const Vector x0 = unit_sphere_sample(9, 4);
    InputSignal step;
    step.kind = InputSignal::Step{Vector::Constant(1, 0.5)};
    SimulationTrace a = simulate(bank, step, x0, InitialEstimate::zero(), 30);
    InputSignal samples;
    samples.kind = InputSignal::Samples{Matrix::Constant(1, 30, 0.5)};
    SimulationTrace b = simulate(bank, samples, x0, InitialEstimate::zero(), 30);
    REQUIRE(max_abs(a.x - b.x) <= 1e-12);
}
