#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "qceat/error.hpp"
#include "qceat/genome.hpp"
#include "qceat/pauli.hpp"
#include "qceat/simulate.hpp"

namespace qceat {

struct TrainingError : Error {
    using Error::Error;
};

struct TrainConfig {
    int max_iters = 500;
    double learning_rate = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    NoiseModel noise;
    std::uint64_t seed = 0;
    double convergence_tol = 0.0;  // 0 disables the plateau early stop

    void validate() const {
        if (max_iters < 1) throw Error("max_iters must be at least 1");
        if (!(learning_rate > 0)) throw Error("learning rate must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw Error("Adam betas must lie in [0, 1)");
        if (!(eps_hat > 0)) throw Error("eps_hat must be positive");
        if (convergence_tol < 0) throw Error("convergence_tol must be non-negative");
        noise.validate();
    }
};

struct TrainResult {
    std::vector<double> best_theta;
    double best_cost = 0.0;
    std::vector<double> cost_history;
    std::vector<double> grad_norm_history;
    std::int64_t evaluations = 0;
};

namespace detail {

/// Reusable buffers for the cost evaluations inside one training run.
struct CostScratch {
    Eigen::MatrixXcd rho, dephased;
    Eigen::VectorXcd psi;
    std::vector<double> samples;
};

/// Training cost at the given angles: exact energy when noiseless, the
/// mean over the supplied perturbation set for coherent noise, or the
/// deterministic dephased energy for incoherent noise.
inline double training_cost(const Genome& genome, const PauliHamiltonian& h, const NoiseModel& noise,
                            const std::vector<double>& theta, std::span<const std::vector<double>> deltas,
                            std::int64_t& evaluations, CostScratch& scratch) {
    if (noise.axis == NoiseModel::Axis::kIncoherent && noise.p > 0) {
        evaluations += 1;
        return incoherent_energy_inplace(genome, theta, h, noise.p, scratch.rho, scratch.dephased);
    }
    if (deltas.empty()) {
        evaluations += 1;
        return pure_energy_inplace(genome, theta, {}, h, scratch.psi);
    }
    evaluations += static_cast<std::int64_t>(deltas.size());
    scratch.samples.resize(deltas.size());
    for (std::size_t s = 0; s < deltas.size(); ++s)
        scratch.samples[s] = pure_energy_inplace(genome, theta, deltas[s], h, scratch.psi);
    return pairwise_sum(scratch.samples) / static_cast<double>(deltas.size());
}

inline std::vector<std::vector<double>> training_perturbations(const NoiseModel& noise, std::size_t n_params,
                                                               Rng& rng) {
    if (noise.axis != NoiseModel::Axis::kCoherent || noise.delta == 0.0 || n_params == 0) return {};
    return draw_perturbations(noise.n_train_samples, n_params, delta_to_stddev(noise.delta, noise.convention),
                              rng);
}

}  // namespace detail

/// Parameter-shift gradient of the training cost. For coherent noise one
/// perturbation set is drawn per call and reused at both shifted points of
/// every component, which cancels most of the sampling variance out of the
/// difference.
inline std::vector<double> gradient(const Genome& genome, const PauliHamiltonian& h, const NoiseModel& noise,
                                    const std::vector<double>& theta, Rng& rng) {
    if (theta.size() != genome.parameters().size()) throw Error("theta length does not match genome");
    const auto deltas = detail::training_perturbations(noise, theta.size(), rng);
    detail::CostScratch scratch;
    std::int64_t evals = 0;
    std::vector<double> grad(theta.size());
    std::vector<double> shifted = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        shifted[i] = theta[i] + M_PI / 2;
        const double up = detail::training_cost(genome, h, noise, shifted, deltas, evals, scratch);
        shifted[i] = theta[i] - M_PI / 2;
        const double down = detail::training_cost(genome, h, noise, shifted, deltas, evals, scratch);
        shifted[i] = theta[i];
        grad[i] = (up - down) / 2.0;
    }
    return grad;
}

/// Adam minimization of the configured training cost, starting from the
/// genome's stored angles. Deterministic for a fixed config seed.
inline TrainResult train(const Genome& genome, const PauliHamiltonian& h, const TrainConfig& cfg) {
    cfg.validate();
    if (genome.n_qubits() != h.n_qubits()) throw Error("genome and Hamiltonian qubit counts differ");
    Rng rng = Rng(cfg.seed).substream("train");

    TrainResult result;
    std::vector<double> theta = genome.parameters();
    result.best_theta = theta;

    detail::CostScratch scratch;
    if (theta.empty()) {
        result.best_cost =
            detail::training_cost(genome, h, cfg.noise, theta, {}, result.evaluations, scratch);
        result.cost_history.push_back(result.best_cost);
        result.grad_norm_history.push_back(0.0);
        return result;
    }

    std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
    result.best_cost = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const auto deltas = detail::training_perturbations(cfg.noise, theta.size(), rng);

        const double cost =
            detail::training_cost(genome, h, cfg.noise, theta, deltas, result.evaluations, scratch);
        if (!std::isfinite(cost))
            throw TrainingError("non-finite training cost at iteration " + std::to_string(iter));
        result.cost_history.push_back(cost);
        if (cost < result.best_cost) {
            result.best_cost = cost;
            result.best_theta = theta;
        }

        // same perturbation set at both shifted points of each component
        std::vector<double> grad(theta.size());
        std::vector<double> shifted = theta;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            shifted[i] = theta[i] + M_PI / 2;
            const double up =
                detail::training_cost(genome, h, cfg.noise, shifted, deltas, result.evaluations, scratch);
            shifted[i] = theta[i] - M_PI / 2;
            const double down =
                detail::training_cost(genome, h, cfg.noise, shifted, deltas, result.evaluations, scratch);
            shifted[i] = theta[i];
            grad[i] = (up - down) / 2.0;
        }
        double norm_sq = 0.0;
        for (double gsq : grad) norm_sq += gsq * gsq;
        result.grad_norm_history.push_back(std::sqrt(norm_sq));

        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / (1 - std::pow(cfg.beta1, iter));
            const double v_hat = v[i] / (1 - std::pow(cfg.beta2, iter));
            theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps_hat);
        }

        if (cfg.convergence_tol > 0 && result.cost_history.size() >= 2) {
            const auto n = result.cost_history.size();
            if (std::abs(result.cost_history[n - 1] - result.cost_history[n - 2]) < cfg.convergence_tol) break;
        }
    }
    return result;
}

/// CSV export of the optimization trace: iteration, cost, grad_norm.
inline void write_history_csv(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write history CSV: " + path);
    out << "iteration,cost,grad_norm\n";
    out.precision(17);
    for (std::size_t i = 0; i < result.cost_history.size(); ++i) {
        const double gn = i < result.grad_norm_history.size() ? result.grad_norm_history[i] : 0.0;
        out << i << "," << result.cost_history[i] << "," << gn << "\n";
    }
}

}  // namespace qceat
