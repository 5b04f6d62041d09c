#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "oracles.hpp"
#include "qceat/genome.hpp"
#include "qceat/simulate.hpp"

using namespace qceat;

TEST_CASE("random genomes are deterministic under the seed") {
    Rng a(123), b(123);
    REQUIRE(random_genome(4, 4, a) == random_genome(4, 4, b));
    Rng c(124);
    // different seed virtually never collides for four genes
    REQUIRE_FALSE(random_genome(4, 4, a) == random_genome(4, 4, c));
}

TEST_CASE("single random gene gives a single-layer, single-gene genome") {
    Rng rng(5);
    const Genome g = random_genome(2, 1, rng);
    REQUIRE(g.layers().size() == 1);
    REQUIRE(g.gene_count() == 1);
    g.validate();
}

TEST_CASE("gate kinds are drawn uniformly") {
    Rng rng(99);
    int counts[3] = {0, 0, 0};
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const Gene g = random_gene(4, rng);
        if (g.kind == GateKind::RX) ++counts[0];
        else if (g.kind == GateKind::RZ) ++counts[1];
        else ++counts[2];
    }
    for (int k = 0; k < 3; ++k)
        REQUIRE(std::abs(counts[k] / double(trials) - 1.0 / 3.0) < 0.02);
}

TEST_CASE("single-qubit registers never draw CX") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) REQUIRE(random_gene(1, rng).kind != GateKind::CX);
}

TEST_CASE("hardware-efficient ansatz gate counts") {
    struct Case {
        int qubits, layers, rotations, cx;
    };
    for (const auto& c : {Case{4, 2, 24, 6}, Case{4, 3, 32, 9}, Case{8, 2, 48, 14}}) {
        const Genome g = build_hea(c.qubits, c.layers);
        g.validate();
        REQUIRE(g.rotation_count() == c.rotations);
        REQUIRE(g.cx_count() == c.cx);
        REQUIRE(g.parameters().size() == static_cast<std::size_t>(c.rotations));
    }
    REQUIRE_THROWS_AS(build_hea(1, 2), Error);
    REQUIRE_THROWS_AS(build_hea(4, 0), Error);
}

TEST_CASE("parameter get/set round-trips") {
    Rng rng(8);
    const Genome g = random_genome(4, 10, rng);
    REQUIRE(g.with_parameters(g.parameters()) == g);

    const Genome cx_only = Genome::from_sequence(3, {Gene::cx(0, 1), Gene::cx(1, 2)});
    REQUIRE(cx_only.parameters().empty());

    REQUIRE_THROWS_AS(g.with_parameters(std::vector<double>(g.parameters().size() + 1, 0.0)), Error);
}

TEST_CASE("simplification rules") {
    SECTION("same-kind rotations in adjacent layers merge") {
        const Genome g = Genome::from_sequence(
            2, {Gene::rotation(GateKind::RX, 0, 0.3), Gene::rotation(GateKind::RX, 0, 0.5)});
        const Genome s = simplify(g);
        REQUIRE(s.gene_count() == 1);
        REQUIRE(s.layers()[0][0].kind == GateKind::RX);
        REQUIRE(s.layers()[0][0].theta == Catch::Approx(0.8));
    }
    SECTION("identical adjacent CX genes cancel to an empty genome") {
        const Genome g = Genome::from_sequence(2, {Gene::cx(0, 1), Gene::cx(0, 1)});
        REQUIRE(simplify(g).gene_count() == 0);
    }
    SECTION("different kinds do not merge") {
        const Genome g = Genome::from_sequence(
            2, {Gene::rotation(GateKind::RX, 0, 0.4), Gene::rotation(GateKind::RZ, 0, 0.6)});
        REQUIRE(simplify(g) == g);
    }
    SECTION("mirrored CX genes on swapped qubits do not cancel") {
        const Genome g = Genome::from_sequence(2, {Gene::cx(0, 1), Gene::cx(1, 0)});
        REQUIRE(simplify(g).gene_count() == 2);
    }
    SECTION("cancellation cascades") {
        // outer pair becomes adjacent once the inner pair is removed
        const Genome g = Genome::from_sequence(
            3, {Gene::cx(0, 1), Gene::cx(0, 1), Gene::cx(0, 1), Gene::cx(0, 1)});
        REQUIRE(simplify(g).gene_count() == 0);
    }
}

TEST_CASE("simplify is idempotent and preserves the circuit unitary") {
    Rng rng(21);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + trial % 2;  // 2 or 3 qubits
        Rng draw = rng.substream("genome", trial);
        std::vector<Gene> seq;
        for (int i = 0; i < 8; ++i) seq.push_back(random_gene(n, draw));
        const Genome g = Genome::from_sequence(n, seq);
        const Genome s = simplify(g);
        s.validate();
        REQUIRE(simplify(s) == s);

        const QuantumState a = run_pure(g, QuantumState::zero_state(n));
        const QuantumState b = run_pure(s, QuantumState::zero_state(n));
        REQUIRE(std::abs(a.vector().dot(b.vector())) == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("greedy packing places genes in the earliest free layer") {
    const Genome g = Genome::from_sequence(
        3, {Gene::rotation(GateKind::RX, 2, 0.1), Gene::rotation(GateKind::RZ, 0, 0.2),
            Gene::cx(0, 1), Gene::rotation(GateKind::RX, 2, 0.3)});
    // RX(2) and RZ(0) share layer 0 (sorted by qubit); CX(0,1) must wait for
    // qubit 0; the second RX(2) lands beside it
    REQUIRE(g.layers().size() == 2);
    REQUIRE(g.layers()[0].size() == 2);
    REQUIRE(g.layers()[0][0].q0 == 0);
    REQUIRE(g.layers()[0][1].q0 == 2);
    REQUIRE(g.layers()[1].size() == 2);
    REQUIRE(g.layers()[1][0].kind == GateKind::CX);
    g.validate();
}

TEST_CASE("layer invariant holds after construction and simplification") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        Rng draw = rng.substream("t", trial);
        const Genome g = random_genome(4, 12, draw);
        g.validate();
        simplify(g).validate();
    }
}

TEST_CASE("genome JSON round-trip is bit-exact") {
    Rng rng(17);
    const Genome g = random_genome(4, 9, rng);
    const Genome back = Genome::from_json(g.to_json());
    REQUIRE(back == g);  // operator== compares theta bit patterns via ==

    const std::string path = "/tmp/qceat_test_genome.json";
    save_genome(g, path);
    REQUIRE(load_genome(path) == g);
    std::remove(path.c_str());
}

TEST_CASE("genome JSON rejects malformed input") {
    REQUIRE_THROWS_AS(Genome::from_json(nlohmann::json{{"n_qubits", 2}}), ParseError);
    REQUIRE_THROWS_AS(
        Genome::from_json(nlohmann::json::parse(
            R"({"n_qubits":2,"layers":[[{"gate":"CX","qubits":[0],"theta":null}]]})")),
        ParseError);
    // colliding genes within one declared layer
    REQUIRE_THROWS_AS(
        Genome::from_json(nlohmann::json::parse(
            R"({"n_qubits":2,"layers":[[{"gate":"RX","qubits":[0],"theta":0.0},
                                        {"gate":"RZ","qubits":[0],"theta":0.0}]]})")),
        Error);
}
