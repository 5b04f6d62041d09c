#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <utility>

#include <nlohmann/json.hpp>

#include "qceat/error.hpp"

namespace qceat {

using Complex = std::complex<double>;

/// Either a pure statevector or a density matrix over n qubits.
///
/// Basis convention used everywhere in this library: qubit 0 is the most
/// significant bit of the computational-basis index, i.e. |q0 q1 ... q(n-1)>.
class QuantumState {
public:
    static QuantumState zero_state(int n_qubits) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(std::int64_t{1} << n_qubits);
        v(0) = 1.0;
        return QuantumState(n_qubits, std::move(v));
    }

    static QuantumState pure(Eigen::VectorXcd amplitudes) {
        const int n = qubits_for_dim(amplitudes.size());
        if (std::abs(amplitudes.norm() - 1.0) > 1e-9)
            throw Error("pure state is not normalized");
        return QuantumState(n, std::move(amplitudes));
    }

    static QuantumState mixed(Eigen::MatrixXcd rho) {
        if (rho.rows() != rho.cols()) throw Error("density matrix is not square");
        const int n = qubits_for_dim(rho.rows());
        if (std::abs(rho.trace().real() - 1.0) > 1e-9 || std::abs(rho.trace().imag()) > 1e-9)
            throw Error("density matrix trace is not 1");
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
            throw Error("density matrix is not Hermitian");
        return QuantumState(n, std::move(rho));
    }

    bool is_pure() const { return is_pure_; }
    int n_qubits() const { return n_qubits_; }
    std::int64_t dim() const { return std::int64_t{1} << n_qubits_; }

    const Eigen::VectorXcd& vector() const {
        if (!is_pure_) throw Error("state is not pure");
        return vector_;
    }

    const Eigen::MatrixXcd& density() const {
        if (is_pure_) throw Error("state is not a density matrix");
        return density_;
    }

    Eigen::MatrixXcd as_density() const {
        if (is_pure_) return vector_ * vector_.adjoint();
        return density_;
    }

    /// Debug dump: flat array of interleaved (real, imag) values.
    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        if (is_pure_) {
            for (std::int64_t i = 0; i < vector_.size(); ++i) {
                out.push_back(vector_(i).real());
                out.push_back(vector_(i).imag());
            }
        } else {
            for (std::int64_t r = 0; r < density_.rows(); ++r)
                for (std::int64_t c = 0; c < density_.cols(); ++c) {
                    out.push_back(density_(r, c).real());
                    out.push_back(density_(r, c).imag());
                }
        }
        return out;
    }

private:
    QuantumState(int n, Eigen::VectorXcd v) : n_qubits_(n), is_pure_(true), vector_(std::move(v)) {}
    QuantumState(int n, Eigen::MatrixXcd m) : n_qubits_(n), is_pure_(false), density_(std::move(m)) {}

    static int qubits_for_dim(std::int64_t d) {
        int n = 0;
        while ((std::int64_t{1} << n) < d) ++n;
        if ((std::int64_t{1} << n) != d || d < 2) throw Error("state dimension is not a power of two");
        return n;
    }

    int n_qubits_;
    bool is_pure_;
    Eigen::VectorXcd vector_;
    Eigen::MatrixXcd density_;
};

}  // namespace qceat
