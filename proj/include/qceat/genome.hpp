#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qceat/error.hpp"
#include "qceat/rng.hpp"

namespace qceat {

/// Gate alphabet. RX/RZ/CX is the evolutionary search alphabet; RY exists
/// only so the hardware-efficient ansatz can be expressed as a genome, and
/// is never emitted by mutation or crossover.
enum class GateKind : std::uint8_t { RX, RZ, RY, CX };

inline bool is_rotation(GateKind k) { return k != GateKind::CX; }

inline const char* gate_name(GateKind k) {
    switch (k) {
        case GateKind::RX: return "RX";
        case GateKind::RZ: return "RZ";
        case GateKind::RY: return "RY";
        case GateKind::CX: return "CX";
    }
    return "?";
}

inline GateKind gate_from_name(const std::string& s) {
    if (s == "RX") return GateKind::RX;
    if (s == "RZ") return GateKind::RZ;
    if (s == "RY") return GateKind::RY;
    if (s == "CX") return GateKind::CX;
    throw ParseError("unknown gate \"" + s + "\"");
}

/// One elementary gate: a parameterized rotation on one qubit or a CX on an
/// ordered (control, target) pair. theta is stored unwrapped.
struct Gene {
    GateKind kind;
    int q0;            // rotation target, or CX control
    int q1 = -1;       // CX target; -1 for rotations
    double theta = 0;  // rotations only

    static Gene rotation(GateKind k, int qubit, double theta) { return Gene{k, qubit, -1, theta}; }
    static Gene cx(int control, int target) { return Gene{GateKind::CX, control, target, 0.0}; }

    bool is_rotation() const { return qceat::is_rotation(kind); }
    int lowest_qubit() const { return kind == GateKind::CX ? std::min(q0, q1) : q0; }
    bool touches(int q) const { return q == q0 || (kind == GateKind::CX && q == q1); }

    /// Equality of (kind, qubits), ignoring theta.
    bool same_structure(const Gene& o) const { return kind == o.kind && q0 == o.q0 && q1 == o.q1; }
};

/// Structure-only view of a gene; what speciation and alignment compare.
struct StructGene {
    GateKind kind;
    int q0;
    int q1;
    friend bool operator==(const StructGene&, const StructGene&) = default;
    friend auto operator<=>(const StructGene&, const StructGene&) = default;
};

using GenomeStructure = std::vector<StructGene>;

/// A layered circuit encoding. Within a layer no qubit is touched twice,
/// so the layer's gates commute; genes are kept sorted by lowest touched
/// qubit. Immutable value type: every operation returns a new genome.
class Genome {
public:
    Genome() : n_qubits_(1) {}  // empty single-qubit placeholder

    explicit Genome(int n_qubits) : n_qubits_(n_qubits) {
        if (n_qubits_ < 1) throw Error("genome needs at least one qubit");
    }

    /// Greedy earliest-layer packing of a gene sequence. Preserves the
    /// relative order of genes sharing a qubit, so the circuit unitary is
    /// the sequence product.
    static Genome from_sequence(int n_qubits, const std::vector<Gene>& genes) {
        Genome g(n_qubits);
        std::vector<int> frontier(n_qubits, 0);
        for (const Gene& gene : genes) {
            check_gene(n_qubits, gene);
            int layer = frontier[gene.q0];
            if (gene.kind == GateKind::CX) layer = std::max(layer, frontier[gene.q1]);
            if (layer == static_cast<int>(g.layers_.size())) g.layers_.emplace_back();
            g.layers_[layer].push_back(gene);
            frontier[gene.q0] = layer + 1;
            if (gene.kind == GateKind::CX) frontier[gene.q1] = layer + 1;
        }
        for (auto& layer : g.layers_) canonicalize_layer(layer);
        return g;
    }

    int n_qubits() const { return n_qubits_; }
    const std::vector<std::vector<Gene>>& layers() const { return layers_; }
    bool empty() const { return layers_.empty(); }

    std::vector<Gene> flatten() const {
        std::vector<Gene> out;
        for (const auto& layer : layers_)
            out.insert(out.end(), layer.begin(), layer.end());
        return out;
    }

    GenomeStructure structure() const {
        GenomeStructure out;
        for (const auto& layer : layers_)
            for (const Gene& g : layer) out.push_back({g.kind, g.q0, g.q1});
        return out;
    }

    int gene_count() const {
        int n = 0;
        for (const auto& layer : layers_) n += static_cast<int>(layer.size());
        return n;
    }

    int rotation_count() const {
        int n = 0;
        for (const auto& layer : layers_)
            for (const Gene& g : layer) n += g.is_rotation() ? 1 : 0;
        return n;
    }

    int cx_count() const { return gene_count() - rotation_count(); }

    /// Rotation angles in layer-major canonical order.
    std::vector<double> parameters() const {
        std::vector<double> out;
        for (const auto& layer : layers_)
            for (const Gene& g : layer)
                if (g.is_rotation()) out.push_back(g.theta);
        return out;
    }

    Genome with_parameters(const std::vector<double>& theta) const {
        Genome out = *this;
        std::size_t i = 0;
        for (auto& layer : out.layers_)
            for (Gene& g : layer)
                if (g.is_rotation()) {
                    if (i >= theta.size()) throw Error("parameter vector too short");
                    g.theta = theta[i++];
                }
        if (i != theta.size()) throw Error("parameter vector too long");
        return out;
    }

    /// Checks all genome invariants; throws on violation.
    void validate() const {
        for (const auto& layer : layers_) {
            if (layer.empty()) throw Error("empty layer");
            std::vector<bool> used(n_qubits_, false);
            int prev_lowest = -1;
            for (const Gene& g : layer) {
                check_gene(n_qubits_, g);
                if (!std::isfinite(g.theta)) throw Error("non-finite theta");
                for (int q = 0; q < n_qubits_; ++q)
                    if (g.touches(q)) {
                        if (used[q]) throw Error("qubit touched twice in one layer");
                        used[q] = true;
                    }
                if (g.lowest_qubit() <= prev_lowest) throw Error("layer not in canonical order");
                prev_lowest = g.lowest_qubit();
            }
        }
    }

    /// Hash over structure and exact theta bit patterns.
    std::uint64_t content_hash() const {
        std::uint64_t h = fnv1a("genome");
        h = hash_combine(h, static_cast<std::uint64_t>(n_qubits_));
        for (const auto& layer : layers_) {
            for (const Gene& g : layer) {
                h = hash_combine(h, static_cast<std::uint64_t>(g.kind));
                h = hash_combine(h, static_cast<std::uint64_t>(g.q0 + 1));
                h = hash_combine(h, static_cast<std::uint64_t>(g.q1 + 1));
                std::uint64_t bits;
                static_assert(sizeof(bits) == sizeof(g.theta));
                std::memcpy(&bits, &g.theta, sizeof(bits));
                h = hash_combine(h, bits);
            }
            h = hash_combine(h, 0xffffffffull);  // layer boundary
        }
        return h;
    }

    std::uint64_t structure_hash() const {
        std::uint64_t h = fnv1a("structure");
        for (const auto& layer : layers_)
            for (const Gene& g : layer) {
                h = hash_combine(h, static_cast<std::uint64_t>(g.kind));
                h = hash_combine(h, static_cast<std::uint64_t>(g.q0 + 1));
                h = hash_combine(h, static_cast<std::uint64_t>(g.q1 + 1));
            }
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& layer : layers_) {
            nlohmann::json jl = nlohmann::json::array();
            for (const Gene& g : layer) {
                nlohmann::json jg;
                jg["gate"] = gate_name(g.kind);
                jg["qubits"] = g.kind == GateKind::CX ? nlohmann::json::array({g.q0, g.q1})
                                                      : nlohmann::json::array({g.q0});
                if (g.is_rotation())
                    jg["theta"] = g.theta;
                else
                    jg["theta"] = nullptr;
                jl.push_back(std::move(jg));
            }
            layers.push_back(std::move(jl));
        }
        return nlohmann::json{{"n_qubits", n_qubits_}, {"layers", std::move(layers)}};
    }

    static Genome from_json(const nlohmann::json& doc) {
        if (!doc.is_object() || !doc.contains("n_qubits") || !doc.contains("layers"))
            throw ParseError("genome JSON needs n_qubits and layers");
        Genome g(doc["n_qubits"].get<int>());
        for (const auto& jl : doc["layers"]) {
            std::vector<Gene> layer;
            for (const auto& jg : jl) {
                Gene gene{};
                gene.kind = gate_from_name(jg.at("gate").get<std::string>());
                const auto& qs = jg.at("qubits");
                if (gene.kind == GateKind::CX) {
                    if (qs.size() != 2) throw ParseError("CX needs two qubits");
                    gene.q0 = qs[0].get<int>();
                    gene.q1 = qs[1].get<int>();
                } else {
                    if (qs.size() != 1) throw ParseError("rotation needs one qubit");
                    gene.q0 = qs[0].get<int>();
                    gene.q1 = -1;
                    gene.theta = jg.contains("theta") && !jg["theta"].is_null() ? jg["theta"].get<double>() : 0.0;
                }
                layer.push_back(gene);
            }
            if (layer.empty()) throw ParseError("genome JSON contains an empty layer");
            canonicalize_layer(layer);
            g.layers_.push_back(std::move(layer));
        }
        g.validate();
        return g;
    }

    friend bool operator==(const Genome& a, const Genome& b) {
        if (a.n_qubits_ != b.n_qubits_ || a.layers_.size() != b.layers_.size()) return false;
        for (std::size_t l = 0; l < a.layers_.size(); ++l) {
            if (a.layers_[l].size() != b.layers_[l].size()) return false;
            for (std::size_t i = 0; i < a.layers_[l].size(); ++i) {
                const Gene &x = a.layers_[l][i], &y = b.layers_[l][i];
                if (!x.same_structure(y) || x.theta != y.theta) return false;
            }
        }
        return true;
    }

private:
    static void check_gene(int n_qubits, const Gene& g) {
        if (g.q0 < 0 || g.q0 >= n_qubits) throw Error("qubit index out of range");
        if (g.kind == GateKind::CX) {
            if (g.q1 < 0 || g.q1 >= n_qubits) throw Error("qubit index out of range");
            if (g.q0 == g.q1) throw Error("CX control equals target");
        }
    }

    static void canonicalize_layer(std::vector<Gene>& layer) {
        std::sort(layer.begin(), layer.end(),
                  [](const Gene& a, const Gene& b) { return a.lowest_qubit() < b.lowest_qubit(); });
    }

    int n_qubits_;
    std::vector<std::vector<Gene>> layers_;
};

/// Fixed point of the two rewrite rules: same-kind rotations on the same
/// qubit in adjacent layers merge (theta summed, kept in the earlier
/// layer), and identical CX genes in adjacent layers cancel. Layers are
/// re-packed after every rewrite.
inline Genome simplify(const Genome& genome) {
    std::vector<Gene> seq = genome.flatten();
    Genome packed = Genome::from_sequence(genome.n_qubits(), seq);
    bool changed = true;
    while (changed) {
        changed = false;
        const auto& layers = packed.layers();
        for (std::size_t l = 0; l + 1 < layers.size() && !changed; ++l) {
            for (std::size_t i = 0; i < layers[l].size() && !changed; ++i) {
                for (std::size_t j = 0; j < layers[l + 1].size() && !changed; ++j) {
                    const Gene &a = layers[l][i], &b = layers[l + 1][j];
                    if (a.is_rotation() && a.kind == b.kind && a.q0 == b.q0) {
                        std::vector<Gene> next;
                        for (std::size_t m = 0; m < layers.size(); ++m)
                            for (std::size_t k = 0; k < layers[m].size(); ++k) {
                                if (m == l + 1 && k == j) continue;
                                Gene g = layers[m][k];
                                if (m == l && k == i) g.theta += b.theta;
                                next.push_back(g);
                            }
                        packed = Genome::from_sequence(genome.n_qubits(), next);
                        changed = true;
                    } else if (a.kind == GateKind::CX && a.same_structure(b)) {
                        std::vector<Gene> next;
                        for (std::size_t m = 0; m < layers.size(); ++m)
                            for (std::size_t k = 0; k < layers[m].size(); ++k) {
                                if ((m == l && k == i) || (m == l + 1 && k == j)) continue;
                                next.push_back(layers[m][k]);
                            }
                        packed = Genome::from_sequence(genome.n_qubits(), next);
                        changed = true;
                    }
                }
            }
        }
    }
    return packed;
}

/// One uniformly drawn gene; used by random_genome and by mutation.
inline Gene random_gene(int n_qubits, Rng& rng) {
    // a 1-qubit register cannot host a CX, so the draw collapses to rotations
    const int kinds = n_qubits >= 2 ? 3 : 2;
    const int k = rng.uniform_index(kinds);
    if (k == 2) {
        const int control = rng.uniform_index(n_qubits);
        int target = rng.uniform_index(n_qubits - 1);
        if (target >= control) ++target;
        return Gene::cx(control, target);
    }
    const GateKind kind = k == 0 ? GateKind::RX : GateKind::RZ;
    const int qubit = rng.uniform_index(n_qubits);
    return Gene::rotation(kind, qubit, rng.uniform(0.0, 2.0 * std::numbers::pi));
}

/// Uniformly random circuit: gate kind over {RX, RZ, CX}, qubits over the
/// valid assignments, theta over [0, 2pi). The result is packed and
/// simplified.
inline Genome random_genome(int n_qubits, int n_genes, Rng& rng) {
    if (n_genes < 1) throw Error("random genome needs at least one gene");
    std::vector<Gene> seq;
    seq.reserve(n_genes);
    for (int i = 0; i < n_genes; ++i) seq.push_back(random_gene(n_qubits, rng));
    return simplify(Genome::from_sequence(n_qubits, seq));
}

/// Hardware-efficient ansatz: a column of (RY, RZ) on every qubit, then
/// n_layers repetitions of a linear CX chain followed by another (RY, RZ)
/// column. 2*N*(L+1) rotations and (N-1)*L CX gates, all angles zero.
inline Genome build_hea(int n_qubits, int n_layers) {
    if (n_qubits < 2) throw Error("HEA needs at least 2 qubits");
    if (n_layers < 1) throw Error("HEA needs at least 1 layer");
    std::vector<Gene> seq;
    auto rotation_column = [&] {
        for (int q = 0; q < n_qubits; ++q) seq.push_back(Gene::rotation(GateKind::RY, q, 0.0));
        for (int q = 0; q < n_qubits; ++q) seq.push_back(Gene::rotation(GateKind::RZ, q, 0.0));
    };
    rotation_column();
    for (int l = 0; l < n_layers; ++l) {
        for (int q = 0; q + 1 < n_qubits; ++q) seq.push_back(Gene::cx(q, q + 1));
        rotation_column();
    }
    return Genome::from_sequence(n_qubits, seq);
}

/// Fresh uniform [0, 2pi) angles for every rotation; structure unchanged.
inline Genome randomize_parameters(const Genome& genome, Rng& rng) {
    std::vector<double> theta = genome.parameters();
    for (double& t : theta) t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return genome.with_parameters(theta);
}

inline Genome load_genome(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open genome file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        return Genome::from_json(doc);
    } catch (const Error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_genome(const Genome& genome, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write genome file: " + path);
    out << genome.to_json().dump(1) << "\n";
}

}  // namespace qceat
