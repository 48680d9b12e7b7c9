#include "test_helpers.hpp"

#include <random>

using namespace distobs;
using testing::agents1;

TEST_CASE("assemble_A builds bidiagonal miniblocks exactly") {
    SECTION("single 1x1 block") {
        JordanSpec spec{{{0.5, {1}}}};
        Matrix a = assemble_A(spec);
        REQUIRE(a.rows() == 1);
        REQUIRE(a(0, 0) == 0.5);
    }
    SECTION("single 2x2 miniblock") {
        JordanSpec spec{{{2.0, {2}}}};
        Matrix a = assemble_A(spec);
        Matrix expect{{2.0, 1.0}, {0.0, 2.0}};
        REQUIRE(a == expect);
    }
    SECTION("reference 9x9 system") {
        Matrix a = testing::ref_system().A();
        REQUIRE(a.rows() == 9);
        // Three miniblocks of the eigenvalue 1, sizes 3, 2, 4.
        Matrix expect = Matrix::Zero(9, 9);
        for (int i = 0; i < 9; ++i) expect(i, i) = 1.0;
        for (int i : {0, 1, 3, 5, 6, 7}) expect(i, i + 1) = 1.0;
        REQUIRE(a == expect);
    }
}

TEST_CASE("JordanSpec bookkeeping") {
    JordanSpec spec{{{1.0, {3, 2, 4}}, {0.5, {2}}}};
    REQUIRE(spec.total_dim() == 11);
    REQUIRE(spec.unstable_count() == 1);
    REQUIRE(spec.algebraic_multiplicity(0) == 9);
    REQUIRE(spec.mini_count(0) == 3);
    REQUIRE(spec.offset({0, 1}) == 3);
    REQUIRE(spec.offset({0, 2}) == 5);
    REQUIRE(spec.offset({1, 0}) == 9);
    REQUIRE(spec.unstable_blocks().size() == 3);
    REQUIRE(spec.all_blocks().size() == 4);
}

TEST_CASE("laplacian of the reference digraph matches the known submatrix") {
    Matrix l = laplacian(testing::ref_network());
    REQUIRE(l.rows() == 6);
    // Row sums vanish.
    for (int i = 0; i < 6; ++i) REQUIRE(std::abs(l.row(i).sum()) <= 1e-12 * (1.0 + max_abs(l)));
    // Principal submatrix on agents {2,3,4,5}.
    Matrix sub = principal_submatrix(l, agents1({2, 3, 4, 5}));
    Matrix expect{{1.9, -0.9, 0.0, 0.0}, {-0.9, 0.9, 0.0, 0.0}, {0.0, -0.7, 1.8, -1.1}, {0.0, 0.0, 0.0, 1.2}};
    REQUIRE(max_abs(sub - expect) == 0.0);
    // And on agents {1,2,4,5}.
    Matrix sub3 = principal_submatrix(l, agents1({1, 2, 4, 5}));
    Matrix expect3{{1.0, -1.0, 0.0, 0.0}, {-1.0, 1.9, 0.0, 0.0}, {0.0, 0.0, 1.8, -1.1}, {0.0, 0.0, 0.0, 1.2}};
    REQUIRE(max_abs(sub3 - expect3) == 0.0);
}

TEST_CASE("laplacian trivial cases") {
    SECTION("empty graph") {
        SensorNetwork net{Matrix::Zero(3, 3), true};
        REQUIRE(max_abs(laplacian(net)) == 0.0);
    }
    SECTION("two-node undirected weight w") {
        SensorNetwork net{Matrix{{0.0, 0.7}, {0.7, 0.0}}, false};
        Matrix expect{{0.7, -0.7}, {-0.7, 0.7}};
        REQUIRE(laplacian(net) == expect);
    }
}

TEST_CASE("undirected laplacians are symmetric positive semidefinite") {
    std::mt19937_64 rng(7);
    RandomInstanceOptions opt;
    opt.undirected = true;
    for (int trial = 0; trial < 25; ++trial) {
        RandomInstance inst = random_instance(rng, opt);
        Matrix l = laplacian(inst.net);
        REQUIRE(max_abs(l - l.transpose()) == 0.0);
        for (double mu : symmetric_spectrum(l)) REQUIRE(mu >= -1e-10);
        for (int i = 0; i < l.rows(); ++i) REQUIRE(std::abs(l.row(i).sum()) <= 1e-12 * (1.0 + max_abs(l)));
    }
}

TEST_CASE("validate accepts the reference instance") {
    REQUIRE(validate(testing::ref_system(), testing::ref_outputs(), testing::ref_network()).empty());
}

TEST_CASE("validate reports structured violations") {
    SystemModel sys = testing::ref_system();
    AgentOutputs out = testing::ref_outputs();
    SensorNetwork net = testing::ref_network();

    SECTION("output width mismatch") {
        out.C[1] = Matrix::Zero(3, 8);
        auto v = validate(sys, out, net);
        REQUIRE(!v.empty());
        bool found = false;
        for (const Violation& viol : v)
            if (viol.message.find("output width mismatch") != std::string::npos) found = true;
        REQUIRE(found);
    }
    SECTION("nonzero adjacency diagonal") {
        net.adjacency(0, 0) = 0.3;
        auto v = validate(sys, out, net);
        REQUIRE(v.size() == 1);
        REQUIRE(v[0].message.find("nonzero diagonal") != std::string::npos);
    }
    SECTION("repeated eigenvalues") {
        sys.jordan.eigens.push_back({1.0, {1}});
        sys.B = Matrix::Ones(10, 1);
        out.C.clear();
        for (int i = 0; i < 6; ++i) out.C.push_back(Matrix::Ones(1, 10));
        REQUIRE(!validate(sys, out, net).empty());
    }
    SECTION("stable eigenvalue before unstable one") {
        SystemModel bad;
        bad.jordan.eigens = {{0.5, {1}}, {2.0, {1}}};
        bad.B = Matrix(2, 0);
        AgentOutputs o;
        o.C = {Matrix::Ones(1, 2)};
        SensorNetwork n{Matrix::Zero(1, 1), true};
        bool found = false;
        for (const Violation& viol : validate(bad, o, n))
            if (viol.message.find("precede") != std::string::npos) found = true;
        REQUIRE(found);
    }
    SECTION("asymmetric adjacency flagged when undirected") {
        net.directed = false;
        REQUIRE(!validate(sys, out, net).empty());
    }
}
