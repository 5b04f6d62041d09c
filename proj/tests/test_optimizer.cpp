#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "qceat/optimizer.hpp"

using namespace qceat;

namespace {

// central finite differences on the deterministic training cost
std::vector<double> finite_difference(const Genome& g, const PauliHamiltonian& h, const NoiseModel& noise,
                                      const std::vector<double>& theta, double step = 1e-5) {
    auto cost = [&](const std::vector<double>& t) {
        const Genome at = g.with_parameters(t);
        if (noise.axis == NoiseModel::Axis::kIncoherent && noise.p > 0) return energy_incoherent(at, h, noise.p);
        return expectation(h, run_pure(at, QuantumState::zero_state(g.n_qubits())));
    };
    std::vector<double> grad(theta.size());
    std::vector<double> t = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        t[i] = theta[i] + step;
        const double up = cost(t);
        t[i] = theta[i] - step;
        const double down = cost(t);
        t[i] = theta[i];
        grad[i] = (up - down) / (2 * step);
    }
    return grad;
}

Genome random_parameterized_genome(int n_qubits, int n_genes, Rng& rng) {
    std::vector<Gene> seq;
    for (int i = 0; i < n_genes; ++i) seq.push_back(random_gene(n_qubits, rng));
    return Genome::from_sequence(n_qubits, seq);
}

}  // namespace

TEST_CASE("parameter-shift gradient of a single RX rotation") {
    const PauliHamiltonian hz(1, {{1.0, PauliString("Z")}});
    const Genome g = Genome::from_sequence(1, {Gene::rotation(GateKind::RX, 0, M_PI / 2)});
    Rng rng(1);
    const auto grad = gradient(g, hz, NoiseModel::noiseless(), {M_PI / 2}, rng);
    REQUIRE(grad.size() == 1);
    REQUIRE(grad[0] == Catch::Approx(-1.0).margin(1e-12));  // d cos(theta)/dtheta at pi/2
}

TEST_CASE("parameter-shift matches finite differences") {
    const PauliHamiltonian h = build_heisenberg(3, 1.0);
    Rng rng(2);
    std::vector<NoiseModel> regimes{NoiseModel::noiseless(), NoiseModel::incoherent(0.0),
                                    NoiseModel::incoherent(0.05), NoiseModel::incoherent(0.1)};
    for (int trial = 0; trial < 6; ++trial) {
        Rng draw = rng.substream("g", trial);
        const Genome g = random_parameterized_genome(3, 9, draw);
        const auto theta = g.parameters();
        for (const auto& noise : regimes) {
            Rng grng = rng.substream("grad", trial);
            const auto ps = gradient(g, h, noise, theta, grng);
            const auto fd = finite_difference(g, h, noise, theta);
            REQUIRE(ps.size() == fd.size());
            for (std::size_t i = 0; i < ps.size(); ++i)
                REQUIRE(std::abs(ps[i] - fd[i]) < 1e-6 * std::max(1.0, std::abs(ps[i])));
        }
    }
}

TEST_CASE("gradient of a parameter-free genome is empty") {
    const Genome g = Genome::from_sequence(2, {Gene::cx(0, 1)});
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    Rng rng(3);
    REQUIRE(gradient(g, h, NoiseModel::noiseless(), {}, rng).empty());
    REQUIRE_THROWS_AS(gradient(g, h, NoiseModel::noiseless(), {0.1}, rng), Error);
}

TEST_CASE("training a parameter-free genome returns the constant energy") {
    const Genome g = Genome::from_sequence(2, {Gene::cx(0, 1)});
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    TrainConfig cfg;
    cfg.max_iters = 50;
    const TrainResult r = train(g, h, cfg);
    REQUIRE(r.best_theta.empty());
    REQUIRE(r.best_cost ==
            Catch::Approx(expectation(h, run_pure(g, QuantumState::zero_state(2)))).margin(1e-12));
    REQUIRE(r.cost_history.size() == 1);
}

TEST_CASE("training is deterministic under the seed") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    Rng draw(5);
    Genome g = randomize_parameters(build_hea(2, 1), draw);
    TrainConfig cfg;
    cfg.max_iters = 40;
    cfg.noise = NoiseModel::coherent(0.1, 10);
    cfg.seed = 77;
    const TrainResult a = train(g, h, cfg);
    const TrainResult b = train(g, h, cfg);
    REQUIRE(a.cost_history == b.cost_history);
    REQUIRE(a.best_theta == b.best_theta);
}

TEST_CASE("noiseless training improves on the initial cost and respects the variational bound") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    const double e0 = exact_diagonalize(h).energy;
    Rng draw(6);
    for (int trial = 0; trial < 3; ++trial) {
        Rng seed_rng = draw.substream("init", trial);
        Genome g = randomize_parameters(build_hea(2, 2), seed_rng);
        TrainConfig cfg;
        cfg.max_iters = 150;
        cfg.seed = trial;
        const TrainResult r = train(g, h, cfg);
        REQUIRE(r.best_cost <= r.cost_history.front() + 1e-12);
        REQUIRE(r.best_cost >= e0 - 1e-9);
    }
}

TEST_CASE("HEA reaches the two-qubit Heisenberg ground state") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    Rng draw(7);
    Genome g = randomize_parameters(build_hea(2, 2), draw);
    TrainConfig cfg;
    cfg.max_iters = 300;
    const TrainResult r = train(g, h, cfg);
    REQUIRE(r.best_cost == Catch::Approx(-3.0).margin(2e-2));
    const Genome trained = g.with_parameters(r.best_theta);
    const GroundTruth gs = exact_diagonalize(h);
    REQUIRE(fidelity_incoherent(trained, gs, 0.0) > 0.99);
}

TEST_CASE("incoherent training respects the variational bound") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    const double e0 = exact_diagonalize(h).energy;
    Rng draw(8);
    Genome g = randomize_parameters(build_hea(2, 1), draw);
    TrainConfig cfg;
    cfg.max_iters = 60;
    cfg.noise = NoiseModel::incoherent(0.05);
    const TrainResult r = train(g, h, cfg);
    REQUIRE(r.best_cost >= e0 - 1e-9);
}

TEST_CASE("coherent training cost respects the variational bound within sampling error") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    const double e0 = exact_diagonalize(h).energy;
    Rng draw(9);
    Genome g = randomize_parameters(build_hea(2, 1), draw);
    TrainConfig cfg;
    cfg.max_iters = 60;
    cfg.noise = NoiseModel::coherent(0.1, 25);
    const TrainResult r = train(g, h, cfg);

    // re-measure the best point with fresh samples to get an error bar
    Rng eval(10);
    const auto refreshed =
        energy_coherent(g.with_parameters(r.best_theta), h, 0.1, 2000, eval);
    REQUIRE(refreshed.mean >= e0 - 4 * refreshed.std_err);
}

TEST_CASE("history CSV export") {
    const PauliHamiltonian h = build_heisenberg(2, 1.0);
    Rng draw(11);
    Genome g = randomize_parameters(build_hea(2, 1), draw);
    TrainConfig cfg;
    cfg.max_iters = 5;
    const TrainResult r = train(g, h, cfg);
    const std::string path = "/tmp/qceat_test_history.csv";
    write_history_csv(r, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "iteration,cost,grad_norm");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    REQUIRE(rows == static_cast<int>(r.cost_history.size()));
    std::remove(path.c_str());
}
