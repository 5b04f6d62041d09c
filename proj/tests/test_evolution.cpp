#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "qceat/evolution.hpp"

using namespace qceat;

namespace {

GenomeStructure random_structure(int n_qubits, int len, Rng& rng) {
    GenomeStructure s;
    for (int i = 0; i < len; ++i) {
        const Gene g = random_gene(n_qubits, rng);
        s.push_back({g.kind, g.q0, g.q1});
    }
    return s;
}

Genome random_raw_genome(int n_qubits, int len, Rng& rng) {
    std::vector<Gene> seq;
    for (int i = 0; i < len; ++i) seq.push_back(random_gene(n_qubits, rng));
    return Genome::from_sequence(n_qubits, seq);
}

// Independent single-pass speciation written against the same rule; uses
// the recursive edit-distance oracle instead of the library's DP.
std::vector<std::vector<std::size_t>> reference_speciation(const std::vector<GenomeStructure>& pop, double eta) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t g = 0; g < pop.size(); ++g) {
        bool assigned = false;
        for (auto& grp : out) {
            double sum = 0.0;
            std::size_t longest = pop[g].size();
            for (auto idx : grp) {
                sum += oracle::edit_distance_recursive(pop[g], pop[idx]);
                longest = std::max(longest, pop[idx].size());
            }
            const double average = sum / grp.size();
            if (average == 0.0 || average < eta * double(longest)) {
                grp.push_back(g);
                assigned = true;
                break;
            }
        }
        if (!assigned) out.push_back({g});
    }
    return out;
}

int lcs_length(const GenomeStructure& a, const GenomeStructure& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

Individual make_individual(const Genome& g, std::uint64_t serial, double fitness) {
    Individual ind{g};
    ind.serial = serial;
    ind.fitness = fitness;
    ind.trained = true;
    return ind;
}

}  // namespace

TEST_CASE("edit distance basics") {
    Rng rng(1);
    const GenomeStructure a = random_structure(3, 5, rng);
    REQUIRE(edit_distance(a, a) == 0);

    GenomeStructure b = a;
    b.push_back({GateKind::RX, 0, -1});
    REQUIRE(edit_distance(a, b) == 1);
    REQUIRE(edit_distance(b, a) == 1);

    REQUIRE(edit_distance({}, a) == 5);
}

TEST_CASE("edit distance equals the recursive definition") {
    Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        Rng draw = rng.substream("ed", trial);
        const auto a = random_structure(2, draw.uniform_index(6), draw);
        const auto b = random_structure(2, draw.uniform_index(6), draw);
        REQUIRE(edit_distance(a, b) == oracle::edit_distance_recursive(a, b));
    }
}

TEST_CASE("edit distance is a metric") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Rng draw = rng.substream("m", trial);
        const auto a = random_structure(2, 1 + draw.uniform_index(5), draw);
        const auto b = random_structure(2, 1 + draw.uniform_index(5), draw);
        const auto c = random_structure(2, 1 + draw.uniform_index(5), draw);
        REQUIRE(edit_distance(a, b) == edit_distance(b, a));
        REQUIRE((edit_distance(a, b) == 0) == (a == b));
        REQUIRE(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
    }
}

TEST_CASE("speciation groups identical structures together") {
    Rng rng(4);
    const Genome g = random_raw_genome(4, 5, rng);
    std::vector<GenomeStructure> pop(6, g.structure());
    const auto species = speciate_indices(pop, 0.3);
    REQUIRE(species.size() == 1);
    REQUIRE(species[0].size() == 6);
}

TEST_CASE("distant structures split into separate species") {
    GenomeStructure a, b;
    for (int i = 0; i < 6; ++i) a.push_back({GateKind::RX, 0, -1});
    for (int i = 0; i < 6; ++i) b.push_back({GateKind::CX, 1, 2});
    REQUIRE(edit_distance(a, b) > 0.3 * 6);
    const auto species = speciate_indices({a, b}, 0.3);
    REQUIRE(species.size() == 2);
}

TEST_CASE("speciation matches a reference reimplementation") {
    Rng rng(5);
    for (int trial = 0; trial < 150; ++trial) {
        Rng draw = rng.substream("sp", trial);
        const int n = 2 + draw.uniform_index(7);
        std::vector<GenomeStructure> pop;
        for (int i = 0; i < n; ++i) pop.push_back(random_structure(2, draw.uniform_index(6), draw));
        REQUIRE(speciate_indices(pop, 0.3) == reference_speciation(pop, 0.3));
        REQUIRE(speciate_indices(pop, 0.6) == reference_speciation(pop, 0.6));
    }
}

TEST_CASE("mutation fire rate and action split") {
    EvolutionConfig cfg;
    Rng rng(6);
    Rng genome_rng(7);
    const Genome base = random_raw_genome(4, 6, genome_rng);

    int fired = 0, added = 0, substituted = 0, deleted = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        MutationAction action{};
        if (mutate(base, cfg, rng, &action)) {
            ++fired;
            if (action == MutationAction::kAdd) ++added;
            else if (action == MutationAction::kSub) ++substituted;
            else ++deleted;
        }
    }
    REQUIRE(std::abs(fired / double(trials) - 0.70) < 0.02);
    REQUIRE(std::abs(added / double(fired) - 0.625) < 0.02);
    REQUIRE(std::abs(substituted / double(fired) - 0.25) < 0.02);
    REQUIRE(std::abs(deleted / double(fired) - 0.125) < 0.02);
}

TEST_CASE("mutation edge cases") {
    EvolutionConfig cfg;
    cfg.p_mut = 1.0;
    SECTION("deletion shrinks a two-gene genome") {
        cfg.p_add = 0.0;
        cfg.p_sub = 0.0;
        cfg.p_del = 1.0;
        const Genome g = Genome::from_sequence(
            3, {Gene::rotation(GateKind::RX, 0, 1.0), Gene::cx(1, 2)});
        Rng rng(8);
        const auto child = mutate(g, cfg, rng);
        REQUIRE(child.has_value());
        REQUIRE(child->gene_count() == 1);
    }
    SECTION("deletion of a single-gene genome is redrawn as addition") {
        cfg.p_add = 0.0;
        cfg.p_sub = 0.0;
        cfg.p_del = 1.0;
        const Genome g = Genome::from_sequence(3, {Gene::cx(0, 1)});
        Rng rng(9);
        MutationAction action{};
        const auto child = mutate(g, cfg, rng, &action);
        REQUIRE(child.has_value());
        REQUIRE(action == MutationAction::kAdd);
        REQUIRE(child->gene_count() >= 1);
    }
    SECTION("mutants satisfy the genome invariants") {
        Rng rng(10);
        Rng grng(11);
        for (int i = 0; i < 200; ++i) {
            const Genome g = random_raw_genome(4, 5, grng);
            if (auto child = mutate(g, cfg, rng)) child->validate();
        }
    }
}

TEST_CASE("intraspecies crossover") {
    SECTION("identical parents reproduce themselves") {
        Rng rng(12);
        const Genome a = simplify(random_raw_genome(3, 6, rng));
        const Genome child = crossover_intra(a, a);
        REQUIRE(child.structure() == a.structure());
        // averaged angles of identical parents stay identical
        REQUIRE(child == a);
    }
    SECTION("fully unmatched parents keep every gene before simplification") {
        const Genome a = Genome::from_sequence(
            4, {Gene::rotation(GateKind::RX, 0, 0.1), Gene::rotation(GateKind::RX, 1, 0.2)});
        const Genome b = Genome::from_sequence(
            4, {Gene::rotation(GateKind::RZ, 2, 0.3), Gene::rotation(GateKind::RZ, 3, 0.4),
                Gene::cx(0, 1)});
        REQUIRE(crossover_intra_genes(a, b).size() == 5);
    }
    SECTION("offspring length is m + n - lcs, matched genes appear once") {
        Rng rng(13);
        for (int trial = 0; trial < 100; ++trial) {
            Rng draw = rng.substream("ci", trial);
            const Genome a = random_raw_genome(3, 2 + draw.uniform_index(5), draw);
            const Genome b = random_raw_genome(3, 2 + draw.uniform_index(5), draw);
            const auto raw = crossover_intra_genes(a, b);
            const int lcs = lcs_length(a.structure(), b.structure());
            REQUIRE(raw.size() == a.gene_count() + b.gene_count() - static_cast<std::size_t>(lcs));
            crossover_intra(a, b).validate();
        }
    }
    SECTION("matched angles are averaged") {
        const Genome a = Genome::from_sequence(2, {Gene::rotation(GateKind::RX, 0, 1.0)});
        const Genome b = Genome::from_sequence(2, {Gene::rotation(GateKind::RX, 0, 2.0)});
        const auto raw = crossover_intra_genes(a, b);
        REQUIRE(raw.size() == 1);
        REQUIRE(raw[0].theta == Catch::Approx(1.5));
    }
}

TEST_CASE("interspecies crossover") {
    SECTION("identical parents reproduce themselves") {
        Rng grng(14);
        const Genome a = simplify(random_raw_genome(3, 7, grng));
        Rng rng(15);
        REQUIRE(crossover_inter(a, a, rng) == a);
    }
    SECTION("colliding unmatched slots pick each parent half the time") {
        const Genome a = Genome::from_sequence(2, {Gene::rotation(GateKind::RX, 0, 1.0)});
        const Genome b = Genome::from_sequence(2, {Gene::rotation(GateKind::RZ, 0, 2.0)});
        Rng rng(16);
        int took_a = 0;
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            const auto raw = crossover_inter_genes(a, b, rng);
            REQUIRE(raw.size() == 1);
            if (raw[0].kind == GateKind::RX) ++took_a;
        }
        REQUIRE(std::abs(took_a / double(trials) - 0.5) < 0.02);
    }
    SECTION("leftover layers of the longer parent are inherited wholesale") {
        const Genome a = Genome::from_sequence(
            2, {Gene::rotation(GateKind::RX, 0, 0.1), Gene::rotation(GateKind::RX, 0, 0.0),
                Gene::rotation(GateKind::RZ, 0, 0.2), Gene::rotation(GateKind::RX, 0, 0.3)});
        REQUIRE(a.layers().size() == 4);
        const Genome b = Genome::from_sequence(2, {Gene::rotation(GateKind::RZ, 1, 0.9)});
        Rng rng(17);
        for (int i = 0; i < 50; ++i) {
            const auto raw = crossover_inter_genes(a, b, rng);
            // layers 1..3 of parent a survive every draw
            int from_tail = 0;
            for (const auto& g : raw)
                if (g.q0 == 0 && (g.theta == 0.0 || g.theta == 0.2 || g.theta == 0.3)) ++from_tail;
            REQUIRE(from_tail == 3);
        }
    }
}

TEST_CASE("cross-species selection keeps the better half") {
    Rng grng(18);
    const Genome g = random_raw_genome(3, 4, grng);
    SECTION("even species size") {
        Species s;
        s.members = {make_individual(g, 0, -1.0), make_individual(g, 1, -0.5), make_individual(g, 2, 0.0),
                     make_individual(g, 3, 0.5)};
        const Species kept = select_cross_species(s);
        REQUIRE(kept.members.size() == 2);
        REQUIRE(kept.members[0].fitness == -1.0);
        REQUIRE(kept.members[1].fitness == -0.5);
    }
    SECTION("odd species size keeps the ceiling") {
        Species s;
        s.members = {make_individual(g, 0, 0.3), make_individual(g, 1, 0.1), make_individual(g, 2, 0.2)};
        REQUIRE(select_cross_species(s).members.size() == 2);
    }
    SECTION("ties break toward fewer genes") {
        Rng r2(19);
        const Genome five = random_raw_genome(3, 5, r2);
        Genome seven_raw = random_raw_genome(3, 7, r2);
        while (seven_raw.gene_count() != 7) seven_raw = random_raw_genome(3, 7, r2);
        Species s;
        s.members = {make_individual(five, 0, 0.0), make_individual(seven_raw, 1, 0.0),
                     make_individual(five, 2, -1.0), make_individual(seven_raw, 3, -2.0)};
        const Species kept = select_cross_species(s);
        REQUIRE(kept.members.size() == 2);
        // cut falls at fitness 0.0: the 5-gene genome wins the tie
        REQUIRE(kept.members[1].genome.gene_count() == 5);
    }
    SECTION("unevaluated members are rejected") {
        Species s;
        s.members = {Individual{g}};
        REQUIRE_THROWS_AS(select_cross_species(s), Error);
    }
}

TEST_CASE("population selection truncates to n_r") {
    Rng grng(20);
    const Genome g = random_raw_genome(3, 4, grng);
    auto build = [&](int count) {
        Population p;
        Species a, b;
        for (int i = 0; i < count; ++i) {
            auto ind = make_individual(g, i, double(i));
            (i % 2 ? a : b).members.push_back(ind);
        }
        p.species = {a, b};
        return p;
    };
    SECTION("small populations pass through") {
        const Population kept = select_population(build(40), 50);
        REQUIRE(kept.size() == 40);
    }
    SECTION("oversized populations lose their worst members") {
        const Population kept = select_population(build(60), 50);
        REQUIRE(kept.size() == 50);
        for (const auto& s : kept.species)
            for (const auto& m : s.members) REQUIRE(m.fitness < 50.0);
    }
    SECTION("species that fall entirely below the cut are dropped") {
        Population p;
        Species good, bad;
        for (int i = 0; i < 3; ++i) good.members.push_back(make_individual(g, i, -1.0));
        for (int i = 3; i < 6; ++i) bad.members.push_back(make_individual(g, i, 1.0));
        p.species = {good, bad};
        const Population kept = select_population(p, 3);
        REQUIRE(kept.species.size() == 1);
        REQUIRE(kept.size() == 3);
    }
}

TEST_CASE("a small QCEAT run is deterministic and bounded") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    EvolutionConfig cfg;
    cfg.n_outer = 2;
    cfg.n_inner = 1;
    cfg.n_r = 10;
    cfg.initial_population_size = 4;
    cfg.initial_gene_count = 4;
    cfg.train_cfg.max_iters = 20;
    cfg.seed = 99;

    const EvolutionResult a = run_qceat(h, cfg);
    const EvolutionResult b = run_qceat(h, cfg);
    REQUIRE(a.best.genome == b.best.genome);
    REQUIRE(a.best.fitness == b.best.fitness);
    REQUIRE(a.population.size() == b.population.size());
    REQUIRE(a.population.size() <= static_cast<std::size_t>(cfg.n_r));

    for (const auto& s : a.population.species)
        for (const auto& m : s.members) {
            m.genome.validate();
            REQUIRE(m.trained);
        }

    // the incumbent best never worsens across outer iterations
    double last = std::numeric_limits<double>::infinity();
    for (const auto& rec : a.log)
        if (rec.at("event") == "select_population") {
            const double f = rec.at("best_fitness").get<double>();
            REQUIRE(f <= last + 1e-12);
            last = f;
        }

    // thread count must not change the outcome
    EvolutionConfig threaded = cfg;
    threaded.n_threads = 2;
    const EvolutionResult c = run_qceat(h, threaded);
    REQUIRE(c.best.genome == a.best.genome);
    REQUIRE(c.population.size() == a.population.size());
}

TEST_CASE("checkpoint round-trip and resume") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    EvolutionConfig cfg;
    cfg.n_outer = 3;
    cfg.n_inner = 1;
    cfg.n_r = 8;
    cfg.initial_population_size = 3;
    cfg.initial_gene_count = 3;
    cfg.train_cfg.max_iters = 10;
    cfg.seed = 7;

    std::map<int, Population> checkpoints;
    RunHooks hooks;
    hooks.checkpoint = [&](const Population& p, int outer) { checkpoints[outer] = p; };
    const EvolutionResult full = run_qceat(h, cfg, hooks);
    REQUIRE(checkpoints.count(1) == 1);

    // serialize + reload the snapshot after outer iteration 1, then resume
    const Population reloaded = population_from_json(population_to_json(checkpoints[1]));
    REQUIRE(reloaded.outer_completed == 2);
    const EvolutionResult resumed = run_qceat(h, cfg, {}, reloaded);
    REQUIRE(resumed.best.genome == full.best.genome);
    REQUIRE(resumed.best.fitness == full.best.fitness);
}
