#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qceat/error.hpp"
#include "qceat/state.hpp"

namespace qceat {

/// Tensor product of single-qubit Pauli operators, one letter per qubit.
/// Qubit 0 is the leftmost letter and the most significant bit of the
/// basis index (see QuantumState).
class PauliString {
public:
    explicit PauliString(std::string ops) : ops_(std::move(ops)) {
        const int n = static_cast<int>(ops_.size());
        if (n == 0) throw Error("empty Pauli string");
        int n_y = 0;
        for (int q = 0; q < n; ++q) {
            const char c = ops_[q];
            const std::uint64_t bit = std::uint64_t{1} << (n - 1 - q);
            switch (c) {
                case 'I': break;
                case 'X': flip_mask_ |= bit; break;
                case 'Y': flip_mask_ |= bit; sign_mask_ |= bit; ++n_y; break;
                case 'Z': sign_mask_ |= bit; break;
                default: throw Error(std::string("invalid Pauli letter '") + c + "'");
            }
        }
        // i^{n_y}
        static constexpr Complex table[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        y_phase_ = table[n_y % 4];
    }

    int n_qubits() const { return static_cast<int>(ops_.size()); }
    const std::string& ops() const { return ops_; }
    bool is_identity() const { return flip_mask_ == 0 && sign_mask_ == 0; }

    /// P|k> = phase(k) |k ^ flip_mask>
    std::uint64_t flip_mask() const { return flip_mask_; }
    Complex phase(std::uint64_t basis_index) const {
        const int parity = std::popcount(basis_index & sign_mask_) & 1;
        return parity ? -y_phase_ : y_phase_;
    }

    /// <psi|P|psi>
    Complex expectation(const Eigen::VectorXcd& psi) const {
        Complex acc = 0.0;
        const auto dim = static_cast<std::uint64_t>(psi.size());
        for (std::uint64_t k = 0; k < dim; ++k)
            acc += std::conj(psi(k ^ flip_mask_)) * phase(k) * psi(k);
        return acc;
    }

    /// Tr[P rho]
    Complex trace_with(const Eigen::MatrixXcd& rho) const {
        Complex acc = 0.0;
        const auto dim = static_cast<std::uint64_t>(rho.rows());
        for (std::uint64_t k = 0; k < dim; ++k)
            acc += phase(k) * rho(k, k ^ flip_mask_);
        return acc;
    }

    /// Dense matrix representation (2^n x 2^n).
    Eigen::MatrixXcd to_matrix() const {
        const std::int64_t dim = std::int64_t{1} << n_qubits();
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
        for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(dim); ++k)
            m(k ^ flip_mask_, k) = phase(k);
        return m;
    }

    friend bool operator==(const PauliString& a, const PauliString& b) { return a.ops_ == b.ops_; }
    friend auto operator<=>(const PauliString& a, const PauliString& b) { return a.ops_ <=> b.ops_; }

private:
    std::string ops_;
    std::uint64_t flip_mask_ = 0;  // X and Y letters
    std::uint64_t sign_mask_ = 0;  // Y and Z letters
    Complex y_phase_{1.0, 0.0};
};

/// Observable as a real-weighted sum of Pauli strings. Duplicate strings
/// are merged at construction; real weights make Hermiticity automatic.
class PauliHamiltonian {
public:
    struct Term {
        double coeff;
        PauliString string;
    };

    PauliHamiltonian(int n_qubits, std::vector<Term> terms, std::string unit_label = "",
                     std::optional<double> reference_ground_energy = std::nullopt)
        : n_qubits_(n_qubits), unit_(std::move(unit_label)), reference_ground_energy_(reference_ground_energy) {
        if (n_qubits_ < 1) throw Error("Hamiltonian needs at least one qubit");
        std::map<std::string, double> merged;
        for (const auto& t : terms) {
            if (t.string.n_qubits() != n_qubits_)
                throw Error("Pauli string \"" + t.string.ops() + "\" does not match qubit count");
            if (!std::isfinite(t.coeff))
                throw Error("non-finite coefficient for term \"" + t.string.ops() + "\"");
            merged[t.string.ops()] += t.coeff;
        }
        for (const auto& [ops, coeff] : merged)
            if (coeff != 0.0) terms_.push_back(Term{coeff, PauliString(ops)});
    }

    int n_qubits() const { return n_qubits_; }
    std::int64_t dim() const { return std::int64_t{1} << n_qubits_; }
    const std::vector<Term>& terms() const { return terms_; }
    const std::string& unit() const { return unit_; }
    std::optional<double> reference_ground_energy() const { return reference_ground_energy_; }

    Eigen::MatrixXcd to_matrix() const {
        Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim(), dim());
        for (const auto& t : terms_) {
            const std::uint64_t flip = t.string.flip_mask();
            for (std::uint64_t k = 0; k < static_cast<std::uint64_t>(dim()); ++k)
                m(k ^ flip, k) += t.coeff * t.string.phase(k);
        }
        return m;
    }

private:
    int n_qubits_;
    std::vector<Term> terms_;
    std::string unit_;
    std::optional<double> reference_ground_energy_;
};

/// Exact lowest eigenpair of a Hamiltonian, with the full ground space
/// retained so that fidelities stay well-defined under degeneracy.
struct GroundTruth {
    double energy = 0.0;
    Eigen::VectorXcd state;         // one unit ground vector
    Eigen::MatrixXcd ground_space;  // orthonormal columns spanning the ground space
    bool degenerate = false;
};

/// Anti-ferromagnetic Heisenberg chain with open boundaries:
/// J * sum_i (XX + YY + ZZ) on neighboring qubits.
inline PauliHamiltonian build_heisenberg(int n_qubits, double coupling) {
    if (n_qubits < 2) throw Error("Heisenberg chain needs at least 2 qubits");
    if (!(coupling > 0.0)) throw Error("Heisenberg coupling must be positive");
    std::vector<PauliHamiltonian::Term> terms;
    terms.reserve(3 * (n_qubits - 1));
    for (int i = 0; i + 1 < n_qubits; ++i) {
        for (char axis : {'X', 'Y', 'Z'}) {
            std::string ops(n_qubits, 'I');
            ops[i] = axis;
            ops[i + 1] = axis;
            terms.push_back({coupling, PauliString(std::move(ops))});
        }
    }
    return PauliHamiltonian(n_qubits, std::move(terms), "J");
}

/// Dense exact diagonalization; the oracle for ground energies and states.
inline GroundTruth exact_diagonalize(const PauliHamiltonian& h) {
    if (h.n_qubits() > 12) throw Error("exact_diagonalize is capped at 12 qubits");
    const Eigen::MatrixXcd m = h.to_matrix();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
    if (solver.info() != Eigen::Success) throw Error("eigensolver failed");

    GroundTruth gt;
    gt.energy = solver.eigenvalues()(0);
    const double tol = 1e-8 * std::max(1.0, std::abs(gt.energy));
    std::int64_t multiplicity = 1;
    while (multiplicity < h.dim() && solver.eigenvalues()(multiplicity) - gt.energy < tol) ++multiplicity;
    gt.ground_space = solver.eigenvectors().leftCols(multiplicity);
    gt.state = gt.ground_space.col(0);
    gt.degenerate = multiplicity > 1;

    const double residual = (m * gt.state - gt.energy * gt.state).norm() / std::max(1.0, std::abs(gt.energy));
    if (residual > 1e-10) throw Error("ground-state residual out of tolerance");
    return gt;
}

/// <H> for a pure state or Tr[H rho] for a density matrix.
inline double expectation(const PauliHamiltonian& h, const QuantumState& state) {
    if (state.n_qubits() != h.n_qubits()) throw Error("state dimension does not match Hamiltonian");
    Complex acc = 0.0;
    if (state.is_pure()) {
        const Eigen::VectorXcd& psi = state.vector();
        if (std::abs(psi.norm() - 1.0) > 1e-9) throw Error("state is not normalized");
        for (const auto& t : h.terms()) acc += t.coeff * t.string.expectation(psi);
    } else {
        const Eigen::MatrixXcd& rho = state.density();
        if (std::abs(rho.trace().real() - 1.0) > 1e-9) throw Error("density matrix trace is not 1");
        for (const auto& t : h.terms()) acc += t.coeff * t.string.trace_with(rho);
    }
    if (std::abs(acc.imag()) > 1e-10 * std::max(1.0, std::abs(acc.real())))
        throw Error("expectation has a non-real residue");
    return acc.real();
}

/// Squared overlap with the ground space: |<gs|psi>|^2, or Tr[P_gs rho],
/// summed over all degenerate ground vectors.
inline double ground_state_fidelity(const GroundTruth& gs, const QuantumState& state) {
    double f = 0.0;
    for (std::int64_t c = 0; c < gs.ground_space.cols(); ++c) {
        const Eigen::VectorXcd& g = gs.ground_space.col(c);
        if (state.is_pure()) {
            f += std::norm(g.dot(state.vector()));
        } else {
            f += (g.adjoint() * state.density() * g)(0, 0).real();
        }
    }
    return f;
}

/// Reads the Hamiltonian JSON schema:
/// { "n_qubits": int, "unit": string, "reference_ground_energy": float|null,
///   "terms": [ { "pauli": "XIZY...", "coeff": float } ] }
inline PauliHamiltonian load_hamiltonian(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open Hamiltonian file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("n_qubits") || !doc.contains("terms"))
        throw ParseError(path + ": expected object with n_qubits and terms");
    if (!doc["n_qubits"].is_number_integer() || doc["n_qubits"].get<int>() < 1)
        throw ParseError(path + ": n_qubits must be a positive integer");
    const int n = doc["n_qubits"].get<int>();
    const std::string unit = doc.value("unit", std::string{});
    std::optional<double> reference;
    if (doc.contains("reference_ground_energy") && !doc["reference_ground_energy"].is_null()) {
        if (!doc["reference_ground_energy"].is_number())
            throw ParseError(path + ": reference_ground_energy must be a number or null");
        reference = doc["reference_ground_energy"].get<double>();
    }
    if (!doc["terms"].is_array()) throw ParseError(path + ": terms must be an array");

    std::vector<PauliHamiltonian::Term> terms;
    for (const auto& t : doc["terms"]) {
        if (!t.is_object() || !t.contains("pauli") || !t.contains("coeff"))
            throw ParseError(path + ": each term needs pauli and coeff");
        const std::string ops = t["pauli"].get<std::string>();
        if (static_cast<int>(ops.size()) != n)
            throw ParseError(path + ": term \"" + ops + "\" has length " + std::to_string(ops.size()) +
                             ", expected " + std::to_string(n));
        if (!t["coeff"].is_number())
            throw ParseError(path + ": term \"" + ops + "\" has a non-real coefficient");
        try {
            terms.push_back({t["coeff"].get<double>(), PauliString(ops)});
        } catch (const Error& e) {
            throw ParseError(path + ": term \"" + ops + "\": " + e.what());
        }
    }
    try {
        return PauliHamiltonian(n, std::move(terms), unit, reference);
    } catch (const Error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace qceat
