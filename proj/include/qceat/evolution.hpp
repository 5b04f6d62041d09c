#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qceat/error.hpp"
#include "qceat/genome.hpp"
#include "qceat/optimizer.hpp"
#include "qceat/parallel.hpp"
#include "qceat/pauli.hpp"
#include "qceat/rng.hpp"

namespace qceat {

// ---------------------------------------------------------------------------
// structural distance and speciation

/// Levenshtein distance between two gene sequences; genes match iff gate
/// kind and qubit assignment agree (angles are ignored).
inline int edit_distance(const GenomeStructure& a, const GenomeStructure& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1), cur(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= n; ++j) {
            const int subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({subst, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

/// Ordered single-pass speciation. The first genome seeds species 0; each
/// subsequent genome joins the first species (in creation order) whose
/// members' average distance to it is below eta * N_g, where N_g is the
/// larger of the candidate's gene count and the species' largest member.
/// Identical structures always group together.
inline std::vector<std::vector<std::size_t>> speciate_indices(const std::vector<GenomeStructure>& structures,
                                                              double eta) {
    if (structures.empty()) throw Error("cannot speciate an empty list");
    std::vector<std::vector<std::size_t>> species;
    std::vector<std::size_t> species_max_len;
    for (std::size_t g = 0; g < structures.size(); ++g) {
        const std::size_t len = structures[g].size();
        bool placed = false;
        for (std::size_t s = 0; s < species.size() && !placed; ++s) {
            double total = 0.0;
            for (std::size_t member : species[s]) total += edit_distance(structures[g], structures[member]);
            const double avg = total / static_cast<double>(species[s].size());
            const double threshold = eta * static_cast<double>(std::max(len, species_max_len[s]));
            if (avg == 0.0 || avg < threshold) {
                species[s].push_back(g);
                species_max_len[s] = std::max(species_max_len[s], len);
                placed = true;
            }
        }
        if (!placed) {
            species.push_back({g});
            species_max_len.push_back(len);
        }
    }
    return species;
}

// ---------------------------------------------------------------------------
// variation operators

struct EvolutionConfig {
    double p_mut = 0.7;
    double p_add = 0.625;
    double p_sub = 0.25;
    double p_del = 0.125;
    double p_cross_intra = 0.05;
    double p_cross_inter = 0.1;
    double eta = 0.3;
    int n_r = 50;
    int n_inner = 3;
    int n_outer = 10;
    int initial_population_size = 0;  // 0: defaults to the qubit count
    int initial_gene_count = 0;       // 0: defaults to the qubit count
    TrainConfig train_cfg;
    std::uint64_t seed = 0;
    int n_threads = 1;

    void validate() const {
        for (double p : {p_mut, p_add, p_sub, p_del, p_cross_intra, p_cross_inter})
            if (p < 0 || p > 1) throw Error("probabilities must lie in [0, 1]");
        if (std::abs(p_add + p_sub + p_del - 1.0) > 1e-12) throw Error("mutation action probabilities must sum to 1");
        if (eta < 0) throw Error("eta must be non-negative");
        if (n_r < 1) throw Error("n_r must be positive");
        if (n_inner < 1 || n_outer < 1) throw Error("loop counts must be positive");
        if (initial_population_size < 0 || initial_gene_count < 0) throw Error("initial sizes must be non-negative");
        if (n_threads < 0) throw Error("thread count must be non-negative");
        train_cfg.validate();
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"p_mut", p_mut},
                              {"p_add", p_add},
                              {"p_sub", p_sub},
                              {"p_del", p_del},
                              {"p_cross_intra", p_cross_intra},
                              {"p_cross_inter", p_cross_inter},
                              {"eta", eta},
                              {"n_r", n_r},
                              {"n_inner", n_inner},
                              {"n_outer", n_outer},
                              {"initial_population_size", initial_population_size},
                              {"initial_gene_count", initial_gene_count},
                              // n_threads is an execution detail, not part of
                              // the reproducible run identity
                              {"seed", seed},
                              {"train",
                               {{"max_iters", train_cfg.max_iters},
                                {"learning_rate", train_cfg.learning_rate},
                                {"beta1", train_cfg.beta1},
                                {"beta2", train_cfg.beta2},
                                {"eps_hat", train_cfg.eps_hat},
                                {"convergence_tol", train_cfg.convergence_tol}}},
                              {"noise",
                               {{"axis", train_cfg.noise.axis == NoiseModel::Axis::kCoherent ? "coherent" : "incoherent"},
                                {"delta", train_cfg.noise.delta},
                                {"p", train_cfg.noise.p},
                                {"n_train_samples", train_cfg.noise.n_train_samples},
                                {"n_eval_samples", train_cfg.noise.n_eval_samples},
                                {"delta_is_variance", train_cfg.noise.convention == DeltaConvention::kVariance}}}};
    }

    static EvolutionConfig from_json(const nlohmann::json& j) {
        EvolutionConfig c;
        c.p_mut = j.value("p_mut", c.p_mut);
        c.p_add = j.value("p_add", c.p_add);
        c.p_sub = j.value("p_sub", c.p_sub);
        c.p_del = j.value("p_del", c.p_del);
        c.p_cross_intra = j.value("p_cross_intra", c.p_cross_intra);
        c.p_cross_inter = j.value("p_cross_inter", c.p_cross_inter);
        c.eta = j.value("eta", c.eta);
        c.n_r = j.value("n_r", c.n_r);
        c.n_inner = j.value("n_inner", c.n_inner);
        c.n_outer = j.value("n_outer", c.n_outer);
        c.initial_population_size = j.value("initial_population_size", c.initial_population_size);
        c.initial_gene_count = j.value("initial_gene_count", c.initial_gene_count);
        c.seed = j.value("seed", c.seed);
        c.n_threads = j.value("n_threads", c.n_threads);
        if (j.contains("train")) {
            const auto& t = j["train"];
            c.train_cfg.max_iters = t.value("max_iters", c.train_cfg.max_iters);
            c.train_cfg.learning_rate = t.value("learning_rate", c.train_cfg.learning_rate);
            c.train_cfg.beta1 = t.value("beta1", c.train_cfg.beta1);
            c.train_cfg.beta2 = t.value("beta2", c.train_cfg.beta2);
            c.train_cfg.eps_hat = t.value("eps_hat", c.train_cfg.eps_hat);
            c.train_cfg.convergence_tol = t.value("convergence_tol", c.train_cfg.convergence_tol);
        }
        if (j.contains("noise")) {
            const auto& n = j["noise"];
            const std::string axis = n.value("axis", std::string("coherent"));
            if (axis == "coherent")
                c.train_cfg.noise.axis = NoiseModel::Axis::kCoherent;
            else if (axis == "incoherent")
                c.train_cfg.noise.axis = NoiseModel::Axis::kIncoherent;
            else
                throw ParseError("noise axis must be coherent or incoherent");
            c.train_cfg.noise.delta = n.value("delta", 0.0);
            c.train_cfg.noise.p = n.value("p", 0.0);
            c.train_cfg.noise.n_train_samples = n.value("n_train_samples", 50);
            c.train_cfg.noise.n_eval_samples = n.value("n_eval_samples", 10000);
            c.train_cfg.noise.convention =
                n.value("delta_is_variance", false) ? DeltaConvention::kVariance : DeltaConvention::kStdDev;
        }
        return c;
    }
};

enum class MutationAction { kAdd, kSub, kDel };

/// With probability p_mut applies exactly one action: addition of a random
/// gene at a random position, substitution of a random gene by a fresh
/// draw, or deletion of a random gene (redrawn as addition when the genome
/// has at most one gene). Returns nullopt when the mutation does not fire;
/// `performed` reports the action that was actually applied.
inline std::optional<Genome> mutate(const Genome& genome, const EvolutionConfig& cfg, Rng& rng,
                                    MutationAction* performed = nullptr) {
    if (!rng.bernoulli(cfg.p_mut)) return std::nullopt;
    std::vector<Gene> seq = genome.flatten();
    const double u = rng.uniform();
    const bool add = u < cfg.p_add;
    const bool sub = !add && u < cfg.p_add + cfg.p_sub;
    if (add || (!sub && seq.size() <= 1)) {
        const std::size_t pos = rng.uniform_int(seq.size() + 1);
        seq.insert(seq.begin() + pos, random_gene(genome.n_qubits(), rng));
        if (performed) *performed = MutationAction::kAdd;
    } else if (sub) {
        if (seq.empty()) {
            seq.push_back(random_gene(genome.n_qubits(), rng));
        } else {
            const std::size_t idx = rng.uniform_int(seq.size());
            seq[idx] = random_gene(genome.n_qubits(), rng);
        }
        if (performed) *performed = MutationAction::kSub;
    } else {
        const std::size_t idx = rng.uniform_int(seq.size());
        seq.erase(seq.begin() + idx);
        if (performed) *performed = MutationAction::kDel;
    }
    return simplify(Genome::from_sequence(genome.n_qubits(), seq));
}

namespace detail {

/// Matched index pairs of the longest common subsequence of two structure
/// sequences, in ascending order. Deterministic traceback.
inline std::vector<std::pair<std::size_t, std::size_t>> lcs_matches(const GenomeStructure& a,
                                                                    const GenomeStructure& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<std::vector<int>> dp(m + 1, std::vector<int>(n + 1, 0));
    for (std::size_t i = 1; i <= m; ++i)
        for (std::size_t j = 1; j <= n; ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    std::size_t i = m, j = n;
    while (i > 0 && j > 0) {
        if (a[i - 1] == b[j - 1] && dp[i][j] == dp[i - 1][j - 1] + 1) {
            matches.emplace_back(i - 1, j - 1);
            --i;
            --j;
        } else if (dp[i - 1][j] >= dp[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(matches.begin(), matches.end());
    return matches;
}

}  // namespace detail

/// Raw gene sequence of the intraspecies offspring, before re-layering and
/// simplification: matched genes (by longest common subsequence) appear
/// once with their angles averaged; unmatched runs from both parents are
/// kept in order, parent-a run first between consecutive matches.
inline std::vector<Gene> crossover_intra_genes(const Genome& a, const Genome& b) {
    const std::vector<Gene> sa = a.flatten(), sb = b.flatten();
    const auto matches = detail::lcs_matches(a.structure(), b.structure());
    std::vector<Gene> out;
    out.reserve(sa.size() + sb.size());
    std::size_t ia = 0, ib = 0;
    auto emit_run = [&out](const std::vector<Gene>& src, std::size_t from, std::size_t to) {
        for (std::size_t k = from; k < to; ++k) out.push_back(src[k]);
    };
    for (const auto& [i, j] : matches) {
        emit_run(sa, ia, i);
        emit_run(sb, ib, j);
        Gene merged = sa[i];
        if (merged.is_rotation()) merged.theta = (sa[i].theta + sb[j].theta) / 2.0;
        out.push_back(merged);
        ia = i + 1;
        ib = j + 1;
    }
    emit_run(sa, ia, sa.size());
    emit_run(sb, ib, sb.size());
    return out;
}

inline Genome crossover_intra(const Genome& a, const Genome& b) {
    if (a.n_qubits() != b.n_qubits()) throw Error("crossover parents must share the qubit count");
    return simplify(Genome::from_sequence(a.n_qubits(), crossover_intra_genes(a, b)));
}

/// Raw gene sequence of the interspecies offspring: layers are aligned by
/// index; genes matched by (kind, qubits) are inherited once with the angle
/// taken from a uniformly chosen parent; unmatched genes are paired by slot
/// and a coin picks between colliding candidates (a lone candidate survives
/// the coin with probability 1/2); leftover layers of the longer parent are
/// inherited wholesale.
inline std::vector<Gene> crossover_inter_genes(const Genome& a, const Genome& b, Rng& rng) {
    const auto& la = a.layers();
    const auto& lb = b.layers();
    const std::size_t shared = std::min(la.size(), lb.size());
    std::vector<Gene> out;
    for (std::size_t k = 0; k < shared; ++k) {
        std::vector<bool> b_matched(lb[k].size(), false);
        std::vector<Gene> unmatched_a;
        // matched genes, in parent-a canonical order
        for (const Gene& ga : la[k]) {
            bool found = false;
            for (std::size_t j = 0; j < lb[k].size() && !found; ++j) {
                if (!b_matched[j] && ga.same_structure(lb[k][j])) {
                    b_matched[j] = true;
                    found = true;
                    Gene inherited = ga;
                    if (inherited.is_rotation() && rng.bernoulli(0.5)) inherited.theta = lb[k][j].theta;
                    out.push_back(inherited);
                }
            }
            if (!found) unmatched_a.push_back(ga);
        }
        std::vector<Gene> unmatched_b;
        for (std::size_t j = 0; j < lb[k].size(); ++j)
            if (!b_matched[j]) unmatched_b.push_back(lb[k][j]);
        const std::size_t slots = std::max(unmatched_a.size(), unmatched_b.size());
        for (std::size_t s = 0; s < slots; ++s) {
            const bool heads = rng.bernoulli(0.5);
            if (s < unmatched_a.size() && s < unmatched_b.size()) {
                out.push_back(heads ? unmatched_a[s] : unmatched_b[s]);
            } else if (s < unmatched_a.size()) {
                if (heads) out.push_back(unmatched_a[s]);
            } else {
                if (heads) out.push_back(unmatched_b[s]);
            }
        }
    }
    const auto& longer = la.size() >= lb.size() ? la : lb;
    for (std::size_t k = shared; k < longer.size(); ++k)
        for (const Gene& g : longer[k]) out.push_back(g);
    return out;
}

inline Genome crossover_inter(const Genome& a, const Genome& b, Rng& rng) {
    if (a.n_qubits() != b.n_qubits()) throw Error("crossover parents must share the qubit count");
    return simplify(Genome::from_sequence(a.n_qubits(), crossover_inter_genes(a, b, rng)));
}

// ---------------------------------------------------------------------------
// population bookkeeping and selection

struct Individual {
    Genome genome;
    std::uint64_t serial = 0;
    double fitness = std::numeric_limits<double>::quiet_NaN();
    bool trained = false;

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"genome", genome.to_json()}, {"serial", serial}, {"fitness", fitness}, {"trained", trained}};
    }
    static Individual from_json(const nlohmann::json& j) {
        Individual ind{Genome::from_json(j.at("genome"))};
        ind.serial = j.at("serial").get<std::uint64_t>();
        ind.fitness = j.at("fitness").get<double>();
        ind.trained = j.at("trained").get<bool>();
        return ind;
    }
};

struct Species {
    std::vector<Individual> members;
};

struct Population {
    std::vector<Species> species;
    int outer_completed = 0;
    std::uint64_t serial_counter = 0;

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& s : species) n += s.members.size();
        return n;
    }
};

/// Selection ordering: lowest fitness first, ties broken by fewer genes,
/// then by lower serial number.
inline bool selection_order(const Individual& a, const Individual& b) {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    const int ga = a.genome.gene_count(), gb = b.genome.gene_count();
    if (ga != gb) return ga < gb;
    return a.serial < b.serial;
}

/// Keeps the ceil(|s|/2) lowest-fitness members of one species. max_size,
/// when positive, additionally caps the survivor count: the every-pair
/// crossover makes species growth quadratic, so an uncapped species can
/// balloon within one inner loop; the population threshold n_r is reused
/// as the per-species ceiling.
inline Species select_cross_species(const Species& s, int max_size = 0) {
    for (const auto& m : s.members)
        if (!m.trained || std::isnan(m.fitness)) throw Error("cross-species selection saw an unevaluated member");
    Species out = s;
    std::sort(out.members.begin(), out.members.end(), selection_order);
    std::size_t keep = (out.members.size() + 1) / 2;
    if (max_size > 0) keep = std::min(keep, static_cast<std::size_t>(max_size));
    out.members.resize(keep);
    return out;
}

/// Truncates the whole population to the n_r lowest-fitness individuals,
/// preserving species membership and dropping emptied species.
inline Population select_population(const Population& p, int n_r) {
    std::vector<const Individual*> all;
    for (const auto& s : p.species)
        for (const auto& m : s.members) {
            if (!m.trained || std::isnan(m.fitness)) throw Error("population selection saw an unevaluated member");
            all.push_back(&m);
        }
    std::vector<const Individual*> sorted = all;
    std::sort(sorted.begin(), sorted.end(),
              [](const Individual* a, const Individual* b) { return selection_order(*a, *b); });
    if (sorted.size() > static_cast<std::size_t>(n_r)) sorted.resize(n_r);
    std::vector<std::uint64_t> kept;
    kept.reserve(sorted.size());
    for (const Individual* m : sorted) kept.push_back(m->serial);
    auto is_kept = [&kept](std::uint64_t serial) {
        return std::find(kept.begin(), kept.end(), serial) != kept.end();
    };
    Population out;
    out.outer_completed = p.outer_completed;
    out.serial_counter = p.serial_counter;
    for (const auto& s : p.species) {
        Species kept_species;
        for (const auto& m : s.members)
            if (is_kept(m.serial)) kept_species.members.push_back(m);
        if (!kept_species.members.empty()) out.species.push_back(std::move(kept_species));
    }
    return out;
}

// ---------------------------------------------------------------------------
// the QCEAT loop

struct RunHooks {
    std::function<void(const nlohmann::json&)> log;                 // JSONL record sink
    std::function<void(const Population&, int outer)> checkpoint;   // called after each outer iteration
};

struct EvolutionResult {
    Individual best;
    TrainResult best_train;  // empty history if the incumbent predates a resume
    Population population;
    std::vector<nlohmann::json> log;
};

namespace detail {

struct TrainOutcome {
    bool ok = false;
    std::string error;
    TrainResult result;
};

/// Trains every untrained individual in the population (and the extras),
/// in parallel, with per-individual seeds derived from the master seed and
/// the individual's serial number. Results are merged in serial order, so
/// outputs do not depend on the thread count. Returns the serials that
/// failed training (their owners are discarded by the caller).
class Trainer {
public:
    Trainer(const PauliHamiltonian& h, const EvolutionConfig& cfg, std::uint64_t master_seed)
        : h_(h), cfg_(cfg), master_(master_seed) {}

    /// key: exact genome content; value: trained genome + fitness
    struct Cached {
        Genome genome;
        double fitness;
    };

    void train_new(std::vector<Individual*> todo, std::vector<nlohmann::json>* events,
                   Individual* best, TrainResult* best_train, std::vector<std::uint64_t>* failed) {
        std::vector<Individual*> jobs;
        for (Individual* ind : todo) {
            if (ind->trained) continue;
            const std::uint64_t key = ind->genome.content_hash();
            if (auto it = cache_.find(key); it != cache_.end()) {
                ind->genome = it->second.genome;
                ind->fitness = it->second.fitness;
                ind->trained = true;
                continue;
            }
            jobs.push_back(ind);
        }
        std::vector<TrainOutcome> outcomes(jobs.size());
        parallel_for(jobs.size(), cfg_.n_threads, [&](std::size_t i) {
            TrainConfig tc = cfg_.train_cfg;
            tc.seed = master_.substream("train", jobs[i]->serial).seed();
            try {
                outcomes[i].result = train(jobs[i]->genome, h_, tc);
                outcomes[i].ok = true;
            } catch (const Error& e) {
                outcomes[i].error = e.what();
            }
        });
        nlohmann::json trained = nlohmann::json::array();
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            Individual* ind = jobs[i];
            if (!outcomes[i].ok) {
                failed->push_back(ind->serial);
                if (events)
                    events->push_back({{"event", "train_failed"},
                                       {"serial", ind->serial},
                                       {"error", outcomes[i].error}});
                continue;
            }
            const TrainResult& r = outcomes[i].result;
            const std::uint64_t input_key = ind->genome.content_hash();
            ind->genome = ind->genome.with_parameters(r.best_theta);
            ind->fitness = r.best_cost;
            ind->trained = true;
            cache_.emplace(input_key, Cached{ind->genome, ind->fitness});
            trained.push_back({{"hash", hash_hex(ind->genome.content_hash())}, {"fitness", ind->fitness}});
            if (best && (!best->trained || selection_order(*ind, *best))) {
                *best = *ind;
                if (best_train) *best_train = r;
            }
        }
        if (events && !trained.empty()) events->push_back({{"event", "train"}, {"genomes", trained}});
    }

    static std::string hash_hex(std::uint64_t h) {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    const PauliHamiltonian& h_;
    const EvolutionConfig& cfg_;
    Rng master_;
    std::map<std::uint64_t, Cached> cache_;
};

inline void drop_failed(Population& pop, const std::vector<std::uint64_t>& failed) {
    if (failed.empty()) return;
    for (auto& s : pop.species) {
        s.members.erase(std::remove_if(s.members.begin(), s.members.end(),
                                       [&](const Individual& m) {
                                           return std::find(failed.begin(), failed.end(), m.serial) != failed.end();
                                       }),
                        s.members.end());
    }
    pop.species.erase(std::remove_if(pop.species.begin(), pop.species.end(),
                                     [](const Species& s) { return s.members.empty(); }),
                      pop.species.end());
}

inline nlohmann::json species_sizes(const Population& pop) {
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& s : pop.species) sizes.push_back(s.members.size());
    return sizes;
}

}  // namespace detail

/// One full QCEAT run: random initial population, then n_outer iterations
/// of speciation, n_inner rounds of mutation + intraspecies crossover +
/// cross-species selection, interspecies crossover, and population
/// selection. Fully deterministic under the config seed; the best trained
/// genome is never discarded (logged as an elitism extension).
/// If `resume_from` is given, the loop continues from its outer counter.
inline EvolutionResult run_qceat(const PauliHamiltonian& h, const EvolutionConfig& cfg,
                                 const RunHooks& hooks = {},
                                 const std::optional<Population>& resume_from = std::nullopt) {
    cfg.validate();
    Rng master(cfg.seed);
    detail::Trainer trainer(h, cfg, cfg.seed);

    EvolutionResult result;
    auto emit = [&](nlohmann::json record, int outer, int inner) {
        record["outer"] = outer;
        record["inner"] = inner;
        if (hooks.log) hooks.log(record);
        result.log.push_back(std::move(record));
    };
    auto emit_many = [&](std::vector<nlohmann::json>& records, int outer, int inner) {
        for (auto& r : records) emit(std::move(r), outer, inner);
        records.clear();
    };

    Population pop;
    Individual best;
    std::vector<nlohmann::json> events;
    std::vector<std::uint64_t> failed;

    if (resume_from) {
        pop = *resume_from;
        for (const auto& s : pop.species)
            for (const auto& m : s.members)
                if (m.trained && (!best.trained || selection_order(m, best))) best = m;
        emit({{"event", "resume"}, {"population", pop.size()}, {"outer_completed", pop.outer_completed}},
             pop.outer_completed - 1, -1);
    } else {
        const int pop_size = cfg.initial_population_size > 0 ? cfg.initial_population_size : h.n_qubits();
        const int genes = cfg.initial_gene_count > 0 ? cfg.initial_gene_count : h.n_qubits();
        Rng init = master.substream("init");
        Species seed_species;
        for (int i = 0; i < pop_size; ++i) {
            Individual ind{random_genome(h.n_qubits(), genes, init)};
            ind.serial = pop.serial_counter++;
            seed_species.members.push_back(std::move(ind));
        }
        pop.species.push_back(std::move(seed_species));
        std::vector<Individual*> todo;
        for (auto& m : pop.species[0].members) todo.push_back(&m);
        trainer.train_new(todo, &events, &best, &result.best_train, &failed);
        detail::drop_failed(pop, failed);
        failed.clear();
        emit({{"event", "init"},
              {"population", pop.size()},
              {"config", cfg.to_json()},
              {"elitism_extension", true}},
             -1, -1);
        emit_many(events, -1, -1);
    }
    if (pop.size() == 0) throw Error("initial population vanished");

    for (int outer = pop.outer_completed; outer < cfg.n_outer; ++outer) {
        Rng rng_o = master.substream("outer", static_cast<std::uint64_t>(outer));

        // Step 2: divide the current population into species by structure
        {
            std::vector<Individual> flat;
            for (auto& s : pop.species)
                for (auto& m : s.members) flat.push_back(std::move(m));
            std::vector<GenomeStructure> structures;
            structures.reserve(flat.size());
            for (const auto& m : flat) structures.push_back(m.genome.structure());
            const auto partition = speciate_indices(structures, cfg.eta);
            pop.species.clear();
            for (const auto& group : partition) {
                Species s;
                for (std::size_t idx : group) s.members.push_back(std::move(flat[idx]));
                pop.species.push_back(std::move(s));
            }
            emit({{"event", "speciate"}, {"species_sizes", detail::species_sizes(pop)}}, outer, -1);
        }

        for (int inner = 0; inner < cfg.n_inner; ++inner) {
            // Step 3: mutation over every member, mutants join their species
            nlohmann::json mutated = nlohmann::json::array();
            for (auto& s : pop.species) {
                const std::size_t original = s.members.size();
                for (std::size_t i = 0; i < original; ++i) {
                    if (auto child = mutate(s.members[i].genome, cfg, rng_o)) {
                        Individual ind{std::move(*child)};
                        ind.serial = pop.serial_counter++;
                        mutated.push_back(detail::Trainer::hash_hex(ind.genome.content_hash()));
                        s.members.push_back(std::move(ind));
                    }
                }
            }
            emit({{"event", "mutation"}, {"genomes", mutated}}, outer, inner);

            // Step 4: intraspecies crossover over every pair
            nlohmann::json crossed = nlohmann::json::array();
            for (auto& s : pop.species) {
                const std::size_t n = s.members.size();
                std::vector<Individual> children;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j)
                        if (rng_o.bernoulli(cfg.p_cross_intra)) {
                            Individual ind{crossover_intra(s.members[i].genome, s.members[j].genome)};
                            ind.serial = pop.serial_counter++;
                            crossed.push_back(detail::Trainer::hash_hex(ind.genome.content_hash()));
                            children.push_back(std::move(ind));
                        }
                for (auto& c : children) s.members.push_back(std::move(c));
            }
            emit({{"event", "crossover_intra"}, {"genomes", crossed}}, outer, inner);

            // Step 5: train the newcomers, then keep the better half of
            // each cross-species
            std::vector<Individual*> todo;
            for (auto& s : pop.species)
                for (auto& m : s.members)
                    if (!m.trained) todo.push_back(&m);
            trainer.train_new(todo, &events, &best, &result.best_train, &failed);
            detail::drop_failed(pop, failed);
            failed.clear();
            emit_many(events, outer, inner);

            for (auto& s : pop.species) {
                Species selected = select_cross_species(s, cfg.n_r);
                // elitism extension: the incumbent best is never discarded
                if (best.trained) {
                    const bool had = std::any_of(s.members.begin(), s.members.end(),
                                                 [&](const Individual& m) { return m.serial == best.serial; });
                    const bool kept = std::any_of(selected.members.begin(), selected.members.end(),
                                                  [&](const Individual& m) { return m.serial == best.serial; });
                    if (had && !kept) {
                        selected.members.pop_back();
                        selected.members.push_back(best);
                    }
                }
                s = std::move(selected);
            }
            emit({{"event", "select_species"}, {"species_sizes", detail::species_sizes(pop)}}, outer, inner);
        }

        // Step 6: interspecies crossover between members of distinct species
        {
            std::vector<Individual> offspring;
            nlohmann::json crossed = nlohmann::json::array();
            for (std::size_t si = 0; si < pop.species.size(); ++si)
                for (std::size_t sj = si + 1; sj < pop.species.size(); ++sj)
                    for (const auto& a : pop.species[si].members)
                        for (const auto& b : pop.species[sj].members)
                            if (rng_o.bernoulli(cfg.p_cross_inter)) {
                                Individual ind{crossover_inter(a.genome, b.genome, rng_o)};
                                ind.serial = pop.serial_counter++;
                                crossed.push_back(detail::Trainer::hash_hex(ind.genome.content_hash()));
                                offspring.push_back(std::move(ind));
                            }
            emit({{"event", "crossover_inter"}, {"genomes", crossed}}, outer, -1);

            // Step 7: train the offspring, merge, select down to n_r
            std::vector<Individual*> todo;
            for (auto& o : offspring) todo.push_back(&o);
            trainer.train_new(todo, &events, &best, &result.best_train, &failed);
            emit_many(events, outer, -1);
            Species merged;
            for (auto& o : offspring)
                if (o.trained) merged.members.push_back(std::move(o));
            if (!merged.members.empty()) pop.species.push_back(std::move(merged));
            failed.clear();
        }

        {
            Population selected = select_population(pop, cfg.n_r);
            if (best.trained) {
                bool kept = false;
                for (const auto& s : selected.species)
                    for (const auto& m : s.members) kept = kept || m.serial == best.serial;
                if (!kept) {
                    Species rescue;
                    rescue.members.push_back(best);
                    selected.species.push_back(std::move(rescue));
                }
            }
            pop = std::move(selected);
        }
        pop.outer_completed = outer + 1;
        emit({{"event", "select_population"},
              {"population", pop.size()},
              {"species_sizes", detail::species_sizes(pop)},
              {"best_fitness", best.fitness},
              {"best_hash", detail::Trainer::hash_hex(best.genome.content_hash())}},
             outer, -1);
        if (hooks.checkpoint) hooks.checkpoint(pop, outer);
    }

    if (!best.trained) throw Error("no trained genome survived the run");
    result.best = best;
    result.population = std::move(pop);
    return result;
}

// ---------------------------------------------------------------------------
// checkpointing

inline nlohmann::json population_to_json(const Population& pop) {
    nlohmann::json species = nlohmann::json::array();
    for (const auto& s : pop.species) {
        nlohmann::json members = nlohmann::json::array();
        for (const auto& m : s.members) members.push_back(m.to_json());
        species.push_back({{"members", std::move(members)}});
    }
    return nlohmann::json{{"outer_completed", pop.outer_completed},
                          {"serial_counter", pop.serial_counter},
                          {"species", std::move(species)}};
}

inline Population population_from_json(const nlohmann::json& j) {
    Population pop;
    pop.outer_completed = j.at("outer_completed").get<int>();
    pop.serial_counter = j.at("serial_counter").get<std::uint64_t>();
    for (const auto& js : j.at("species")) {
        Species s;
        for (const auto& jm : js.at("members")) s.members.push_back(Individual::from_json(jm));
        pop.species.push_back(std::move(s));
    }
    return pop;
}

}  // namespace qceat
