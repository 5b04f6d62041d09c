#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "qceat/error.hpp"
#include "qceat/genome.hpp"
#include "qceat/parallel.hpp"
#include "qceat/pauli.hpp"
#include "qceat/rng.hpp"
#include "qceat/state.hpp"

namespace qceat {

/// Whether NoiseModel::delta is the standard deviation or the variance of
/// the Gaussian angle perturbation. The strength scale plotted in the
/// 0-0.2 rad range reads naturally as a standard deviation; kept
/// switchable in one place.
enum class DeltaConvention { kStdDev, kVariance };

inline double delta_to_stddev(double delta, DeltaConvention conv) {
    return conv == DeltaConvention::kStdDev ? delta : std::sqrt(delta);
}

/// Noise regime for one experiment: Gaussian angle perturbations of spread
/// delta (coherent) or a dephasing rate p attached to every CX
/// (incoherent). The two regimes are studied separately, never combined.
struct NoiseModel {
    enum class Axis { kCoherent, kIncoherent };

    Axis axis = Axis::kCoherent;
    double delta = 0.0;  // coherent spread
    double p = 0.0;      // CX dephasing rate
    int n_train_samples = 50;
    int n_eval_samples = 10000;
    DeltaConvention convention = DeltaConvention::kStdDev;

    static NoiseModel noiseless() { return NoiseModel{}; }
    static NoiseModel coherent(double delta, int train_samples = 50, int eval_samples = 10000) {
        NoiseModel m;
        m.axis = Axis::kCoherent;
        m.delta = delta;
        m.n_train_samples = train_samples;
        m.n_eval_samples = eval_samples;
        return m;
    }
    static NoiseModel incoherent(double p) {
        NoiseModel m;
        m.axis = Axis::kIncoherent;
        m.p = p;
        return m;
    }

    bool is_noiseless() const { return delta == 0.0 && p == 0.0; }

    void validate() const {
        if (delta < 0 || !std::isfinite(delta)) throw Error("delta must be a finite non-negative real");
        if (p < 0 || p > 1) throw Error("dephasing rate must lie in [0, 1]");
        if (axis == Axis::kCoherent && p != 0) throw Error("coherent noise model must have p = 0");
        if (axis == Axis::kIncoherent && delta != 0) throw Error("incoherent noise model must have delta = 0");
        if (n_train_samples < 1 || n_eval_samples < 1) throw Error("sample counts must be positive");
    }
};

namespace detail {

struct Mat2 {
    Complex a00, a01, a10, a11;
};

inline Mat2 rotation_matrix(GateKind kind, double theta) {
    const double c = std::cos(theta / 2), s = std::sin(theta / 2);
    switch (kind) {
        case GateKind::RX: return {Complex(c, 0), Complex(0, -s), Complex(0, -s), Complex(c, 0)};
        case GateKind::RY: return {Complex(c, 0), Complex(-s, 0), Complex(s, 0), Complex(c, 0)};
        case GateKind::RZ: return {Complex(c, -s), Complex(0, 0), Complex(0, 0), Complex(c, s)};
        case GateKind::CX: break;
    }
    throw Error("not a rotation gate");
}

inline void apply_single_qubit(Eigen::VectorXcd& psi, int n_qubits, int qubit, const Mat2& m) {
    const std::uint64_t stride = std::uint64_t{1} << (n_qubits - 1 - qubit);
    const std::uint64_t dim = static_cast<std::uint64_t>(psi.size());
    for (std::uint64_t base = 0; base < dim; base += 2 * stride) {
        for (std::uint64_t k = base; k < base + stride; ++k) {
            const Complex lo = psi(k), hi = psi(k + stride);
            psi(k) = m.a00 * lo + m.a01 * hi;
            psi(k + stride) = m.a10 * lo + m.a11 * hi;
        }
    }
}

inline void apply_cx(Eigen::VectorXcd& psi, int n_qubits, int control, int target) {
    const std::uint64_t cbit = std::uint64_t{1} << (n_qubits - 1 - control);
    const std::uint64_t tbit = std::uint64_t{1} << (n_qubits - 1 - target);
    const std::uint64_t dim = static_cast<std::uint64_t>(psi.size());
    for (std::uint64_t k = 0; k < dim; ++k)
        if ((k & cbit) && !(k & tbit)) std::swap(psi(k), psi(k | tbit));
}

/// rho -> A rho A^dagger for a single-qubit gate A. Allocation-free; runs
/// in the innermost training loops.
inline void apply_single_qubit_rho(Eigen::MatrixXcd& rho, int n_qubits, int qubit, const Mat2& m) {
    const std::int64_t stride = std::int64_t{1} << (n_qubits - 1 - qubit);
    const std::int64_t dim = rho.rows();
    Complex* data = rho.data();  // column-major
    // rows: A rho
    for (std::int64_t c = 0; c < dim; ++c) {
        Complex* col = data + c * dim;
        for (std::int64_t base = 0; base < dim; base += 2 * stride) {
            for (std::int64_t r = base; r < base + stride; ++r) {
                const Complex lo = col[r], hi = col[r + stride];
                col[r] = m.a00 * lo + m.a01 * hi;
                col[r + stride] = m.a10 * lo + m.a11 * hi;
            }
        }
    }
    // columns: (A rho) A^dagger
    const Complex c00 = std::conj(m.a00), c01 = std::conj(m.a01);
    const Complex c10 = std::conj(m.a10), c11 = std::conj(m.a11);
    for (std::int64_t base = 0; base < dim; base += 2 * stride) {
        for (std::int64_t c = base; c < base + stride; ++c) {
            Complex* lo = data + c * dim;
            Complex* hi = data + (c + stride) * dim;
            for (std::int64_t r = 0; r < dim; ++r) {
                const Complex l = lo[r], h = hi[r];
                lo[r] = c00 * l + c01 * h;
                hi[r] = c10 * l + c11 * h;
            }
        }
    }
}

inline void apply_cx_rho(Eigen::MatrixXcd& rho, int n_qubits, int control, int target) {
    const std::int64_t cbit = std::int64_t{1} << (n_qubits - 1 - control);
    const std::int64_t tbit = std::int64_t{1} << (n_qubits - 1 - target);
    const std::int64_t dim = rho.rows();
    for (std::int64_t r = 0; r < dim; ++r)
        if ((r & cbit) && !(r & tbit)) rho.row(r).swap(rho.row(r | tbit));
    for (std::int64_t c = 0; c < dim; ++c)
        if ((c & cbit) && !(c & tbit)) rho.col(c).swap(rho.col(c | tbit));
}

}  // namespace detail

/// Applies a genome to a statevector in place. If theta_offsets is
/// non-empty it must have one entry per rotation parameter (canonical
/// order) and is added to the stored angles.
inline void apply_genome(Eigen::VectorXcd& psi, const Genome& genome,
                         std::span<const double> theta_offsets = {}) {
    std::size_t param = 0;
    for (const auto& layer : genome.layers()) {
        for (const Gene& g : layer) {
            if (g.kind == GateKind::CX) {
                detail::apply_cx(psi, genome.n_qubits(), g.q0, g.q1);
            } else {
                double theta = g.theta;
                if (!theta_offsets.empty()) theta = g.theta + theta_offsets[param];
                ++param;
                detail::apply_single_qubit(psi, genome.n_qubits(), g.q0, detail::rotation_matrix(g.kind, theta));
            }
        }
    }
    if (!theta_offsets.empty() && param != theta_offsets.size())
        throw Error("theta offset vector does not match parameter count");
}

/// Exact statevector evolution of a genome.
inline QuantumState run_pure(const Genome& genome, const QuantumState& phi0) {
    if (!phi0.is_pure()) throw Error("run_pure needs a pure input state");
    if (phi0.n_qubits() != genome.n_qubits()) throw Error("state dimension does not match genome");
    Eigen::VectorXcd psi = phi0.vector();
    apply_genome(psi, genome);
    return QuantumState::pure(std::move(psi));
}

/// Density-matrix evolution where every CX is the dephasing channel
///   xi(rho) = (1-p) U rho U^dag + p sum_ij |ij><ij| rho |ij><ij|,
/// the projectors acting on the CX's own (control, target) pair.
/// Single-qubit gates act unitarily.
inline QuantumState run_mixed(const Genome& genome, const QuantumState& phi0, double p) {
    if (p < 0 || p > 1) throw Error("dephasing rate must lie in [0, 1]");
    if (phi0.n_qubits() != genome.n_qubits()) throw Error("state dimension does not match genome");
    const int n = genome.n_qubits();
    if (p == 0.0 && phi0.is_pure()) {
        // the channel degenerates to unitary evolution
        const QuantumState out = run_pure(genome, phi0);
        return QuantumState::mixed(out.vector() * out.vector().adjoint());
    }
    Eigen::MatrixXcd rho = phi0.as_density();
    Eigen::MatrixXcd dephased;
    for (const auto& layer : genome.layers()) {
        for (const Gene& g : layer) {
            if (g.kind != GateKind::CX) {
                detail::apply_single_qubit_rho(rho, n, g.q0, detail::rotation_matrix(g.kind, g.theta));
                continue;
            }
            if (p == 0.0) {
                detail::apply_cx_rho(rho, n, g.q0, g.q1);
                continue;
            }
            const std::int64_t mask = (std::int64_t{1} << (n - 1 - g.q0)) | (std::int64_t{1} << (n - 1 - g.q1));
            // dephasing acts on the channel input: keep entries whose row and
            // column agree on the (control, target) bits
            dephased = rho;
            for (std::int64_t c = 0; c < rho.cols(); ++c)
                for (std::int64_t r = 0; r < rho.rows(); ++r)
                    if (((r ^ c) & mask) != 0) dephased(r, c) = 0.0;
            detail::apply_cx_rho(rho, n, g.q0, g.q1);
            rho = (1.0 - p) * rho + p * dephased;
        }
    }
    return QuantumState::mixed(std::move(rho));
}

namespace detail {

/// Training-loop core for the incoherent cost: same math as run_mixed +
/// expectation, but in preallocated buffers, with theta taken from a flat
/// parameter vector. Avoids per-evaluation state copies and validation.
inline double incoherent_energy_inplace(const Genome& genome, std::span<const double> theta,
                                        const PauliHamiltonian& h, double p, Eigen::MatrixXcd& rho,
                                        Eigen::MatrixXcd& dephased) {
    const int n = genome.n_qubits();
    const std::int64_t dim = std::int64_t{1} << n;
    rho.resize(dim, dim);
    rho.setZero();
    rho(0, 0) = 1.0;
    std::size_t param = 0;
    for (const auto& layer : genome.layers()) {
        for (const Gene& g : layer) {
            if (g.kind != GateKind::CX) {
                const double angle = theta.empty() ? g.theta : theta[param];
                ++param;
                apply_single_qubit_rho(rho, n, g.q0, rotation_matrix(g.kind, angle));
                continue;
            }
            if (p > 0.0) {
                const std::int64_t mask =
                    (std::int64_t{1} << (n - 1 - g.q0)) | (std::int64_t{1} << (n - 1 - g.q1));
                dephased = rho;
                for (std::int64_t c = 0; c < dim; ++c)
                    for (std::int64_t r = 0; r < dim; ++r)
                        if (((r ^ c) & mask) != 0) dephased(r, c) = 0.0;
                apply_cx_rho(rho, n, g.q0, g.q1);
                rho *= (1.0 - p);
                rho.noalias() += p * dephased;
            } else {
                apply_cx_rho(rho, n, g.q0, g.q1);
            }
        }
    }
    Complex acc = 0.0;
    for (const auto& t : h.terms()) acc += t.coeff * t.string.trace_with(rho);
    return acc.real();
}

/// Training-loop core for the pure-state cost, with optional per-rotation
/// angle offsets (the coherent perturbations).
inline double pure_energy_inplace(const Genome& genome, std::span<const double> theta,
                                  std::span<const double> offsets, const PauliHamiltonian& h,
                                  Eigen::VectorXcd& psi) {
    const int n = genome.n_qubits();
    const std::int64_t dim = std::int64_t{1} << n;
    psi.resize(dim);
    psi.setZero();
    psi(0) = 1.0;
    std::size_t param = 0;
    for (const auto& layer : genome.layers()) {
        for (const Gene& g : layer) {
            if (g.kind == GateKind::CX) {
                apply_cx(psi, n, g.q0, g.q1);
                continue;
            }
            double angle = theta.empty() ? g.theta : theta[param];
            if (!offsets.empty()) angle += offsets[param];
            ++param;
            apply_single_qubit(psi, n, g.q0, rotation_matrix(g.kind, angle));
        }
    }
    Complex acc = 0.0;
    for (const auto& t : h.terms()) acc += t.coeff * t.string.expectation(psi);
    return acc.real();
}

}  // namespace detail

struct MeanStdErr {
    double mean = 0.0;
    double std_err = 0.0;
};

namespace detail {

template <typename SampleFn>
MeanStdErr sample_statistics(int n_samples, SampleFn&& sample) {
    std::vector<double> values(n_samples);
    for (int s = 0; s < n_samples; ++s) values[s] = sample(s);
    MeanStdErr out;
    out.mean = pairwise_sum(values) / n_samples;
    if (n_samples > 1) {
        std::vector<double> sq(n_samples);
        for (int s = 0; s < n_samples; ++s) sq[s] = (values[s] - out.mean) * (values[s] - out.mean);
        out.std_err = std::sqrt(pairwise_sum(sq) / (static_cast<double>(n_samples) * (n_samples - 1)));
    }
    return out;
}

inline std::vector<std::vector<double>> draw_perturbations(int n_samples, std::size_t n_params, double stddev,
                                                           Rng& rng) {
    std::vector<std::vector<double>> deltas(n_samples, std::vector<double>(n_params));
    for (auto& d : deltas)
        for (auto& x : d) x = rng.normal(0.0, stddev);
    return deltas;
}

}  // namespace detail

/// Mean energy over a fixed set of angle-perturbation vectors. This is the
/// deterministic core shared by coherent evaluation and training.
inline double mean_energy_with_perturbations(const Genome& genome, const PauliHamiltonian& h,
                                             std::span<const std::vector<double>> deltas) {
    if (deltas.empty()) {
        return expectation(h, run_pure(genome, QuantumState::zero_state(genome.n_qubits())));
    }
    std::vector<double> values(deltas.size());
    for (std::size_t s = 0; s < deltas.size(); ++s) {
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(std::int64_t{1} << genome.n_qubits());
        psi(0) = 1.0;
        apply_genome(psi, genome, deltas[s]);
        values[s] = expectation(h, QuantumState::pure(std::move(psi)));
    }
    return pairwise_sum(values) / static_cast<double>(deltas.size());
}

/// Average energy under coherent noise: every rotation angle is perturbed
/// by an independent Gaussian draw per sample; CX genes are unaffected.
inline MeanStdErr energy_coherent(const Genome& genome, const PauliHamiltonian& h, double delta, int n_samples,
                                  Rng& rng, DeltaConvention conv = DeltaConvention::kStdDev) {
    if (delta < 0) throw Error("delta must be non-negative");
    if (n_samples < 1) throw Error("need at least one sample");
    const auto params = genome.parameters();
    if (delta == 0.0 || params.empty()) {
        return {expectation(h, run_pure(genome, QuantumState::zero_state(genome.n_qubits()))), 0.0};
    }
    const double sd = delta_to_stddev(delta, conv);
    const auto deltas = detail::draw_perturbations(n_samples, params.size(), sd, rng);
    return detail::sample_statistics(n_samples, [&](int s) {
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(std::int64_t{1} << genome.n_qubits());
        psi(0) = 1.0;
        apply_genome(psi, genome, deltas[s]);
        return expectation(h, QuantumState::pure(std::move(psi)));
    });
}

/// Average ground-space fidelity under coherent noise.
inline MeanStdErr fidelity_coherent(const Genome& genome, const GroundTruth& gs, double delta, int n_samples,
                                    Rng& rng, DeltaConvention conv = DeltaConvention::kStdDev) {
    if (delta < 0) throw Error("delta must be non-negative");
    if (n_samples < 1) throw Error("need at least one sample");
    const auto params = genome.parameters();
    if (delta == 0.0 || params.empty()) {
        return {ground_state_fidelity(gs, run_pure(genome, QuantumState::zero_state(genome.n_qubits()))), 0.0};
    }
    const double sd = delta_to_stddev(delta, conv);
    const auto deltas = detail::draw_perturbations(n_samples, params.size(), sd, rng);
    return detail::sample_statistics(n_samples, [&](int s) {
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(std::int64_t{1} << genome.n_qubits());
        psi(0) = 1.0;
        apply_genome(psi, genome, deltas[s]);
        return ground_state_fidelity(gs, QuantumState::pure(std::move(psi)));
    });
}

/// Deterministic energy under the dephasing-CX channel: Tr[H rho_p].
inline double energy_incoherent(const Genome& genome, const PauliHamiltonian& h, double p) {
    return expectation(h, run_mixed(genome, QuantumState::zero_state(genome.n_qubits()), p));
}

/// Deterministic ground-space fidelity under the dephasing-CX channel.
inline double fidelity_incoherent(const Genome& genome, const GroundTruth& gs, double p) {
    return ground_state_fidelity(gs, run_mixed(genome, QuantumState::zero_state(genome.n_qubits()), p));
}

}  // namespace qceat
