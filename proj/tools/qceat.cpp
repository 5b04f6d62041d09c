// Batch front-end: evolve ansatzes, train the HEA baseline, run robustness
// sweeps and reports, exact-diagonalize Hamiltonians. Every run writes a
// manifest and is reproducible from (config, seed); outputs do not depend
// on the thread count.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "qceat/evolution.hpp"
#include "qceat/optimizer.hpp"
#include "qceat/pauli.hpp"
#include "qceat/robustness.hpp"
#include "qceat/simulate.hpp"
#include "qceat/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qceat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string format_point(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

NoiseModel parse_noise(const std::string& text) {
    if (text.empty() || text == "none") return NoiseModel::noiseless();
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ParseError("noise must be none, coherent:<delta> or incoherent:<p>");
    const std::string kind = text.substr(0, colon);
    const double value = std::stod(text.substr(colon + 1));
    if (kind == "coherent") return NoiseModel::coherent(value);
    if (kind == "incoherent") return NoiseModel::incoherent(value);
    throw ParseError("unknown noise kind \"" + kind + "\"");
}

/// Accepts either a JSON file path or the scheme heisenberg:<n>:<J>.
PauliHamiltonian load_hamiltonian_arg(const std::string& arg) {
    if (arg.rfind("heisenberg:", 0) == 0) {
        const auto rest = arg.substr(11);
        const auto colon = rest.find(':');
        const int n = std::stoi(rest.substr(0, colon));
        const double coupling = colon == std::string::npos ? 1.0 : std::stod(rest.substr(colon + 1));
        return build_heisenberg(n, coupling);
    }
    return load_hamiltonian(arg);
}

std::uint64_t seed_or_env(std::uint64_t seed, bool seed_given) {
    if (seed_given) return seed;
    if (const char* env = std::getenv("QCEAT_SEED")) return std::strtoull(env, nullptr, 10);
    return seed;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return doc;
}

void write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    out << doc.dump(1) << "\n";
}

/// Written with status "running" before the work starts and finalized
/// afterwards; wall-clock fields are the only non-reproducible content.
class Manifest {
public:
    Manifest(std::string command, json config, std::uint64_t seed, fs::path out_dir)
        : path_(out_dir / "manifest.json") {
        doc_["command"] = std::move(command);
        doc_["config"] = std::move(config);
        doc_["master_seed"] = seed;
        doc_["code_version"] = kVersion;
        doc_["status"] = "running";
        doc_["started_unix"] =
            std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
                .count();
        start_ = std::chrono::steady_clock::now();
        write_json_file(doc_, path_.string());
    }

    void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

    void finalize(const std::string& status, const json& summary = json::object()) {
        doc_["status"] = status;
        doc_["outputs"] = outputs_;
        doc_["summary"] = summary;
        doc_["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json_file(doc_, path_.string());
    }

private:
    fs::path path_;
    json doc_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

json best_genome_document(const Individual& best, const NoiseModel& noise, const std::string& hamiltonian_path) {
    return json{{"fitness", best.fitness},
                {"serial", best.serial},
                {"n_rot", best.genome.rotation_count()},
                {"n_cx", best.genome.cx_count()},
                {"noise",
                 {{"axis", noise.axis == NoiseModel::Axis::kCoherent ? "coherent" : "incoherent"},
                  {"delta", noise.delta},
                  {"p", noise.p}}},
                {"hamiltonian", hamiltonian_path},
                {"genome", best.genome.to_json()}};
}

// ---------------------------------------------------------------------------

int cmd_evolve(const std::string& hamiltonian_path, const std::string& config_path, const std::string& noise_text,
               std::uint64_t seed, bool seed_given, int threads, const std::string& out_dir,
               const std::string& resume_path) {
    const PauliHamiltonian h = load_hamiltonian_arg(hamiltonian_path);

    EvolutionConfig cfg;
    if (!config_path.empty()) cfg = EvolutionConfig::from_json(load_json_file(config_path));
    if (!noise_text.empty()) cfg.train_cfg.noise = parse_noise(noise_text);
    cfg.seed = seed_or_env(seed, seed_given);
    cfg.n_threads = threads;
    cfg.validate();

    fs::create_directories(out_dir);
    Manifest manifest("evolve", cfg.to_json(), cfg.seed, out_dir);

    std::ofstream log_stream(fs::path(out_dir) / "run_log.jsonl");
    RunHooks hooks;
    hooks.log = [&](const json& record) { log_stream << record.dump() << "\n"; };
    hooks.checkpoint = [&](const Population& pop, int) {
        write_json_file(population_to_json(pop), (fs::path(out_dir) / "checkpoint.json").string());
    };

    std::optional<Population> resume;
    if (!resume_path.empty()) resume = population_from_json(load_json_file(resume_path));

    const EvolutionResult result = run_qceat(h, cfg, hooks, resume);

    const fs::path best_path = fs::path(out_dir) / "best_genome.json";
    write_json_file(best_genome_document(result.best, cfg.train_cfg.noise, hamiltonian_path), best_path.string());
    manifest.add_output(best_path);
    manifest.add_output(fs::path(out_dir) / "run_log.jsonl");
    manifest.add_output(fs::path(out_dir) / "checkpoint.json");
    if (!result.best_train.cost_history.empty()) {
        const fs::path hist = fs::path(out_dir) / "history.csv";
        write_history_csv(result.best_train, hist.string());
        manifest.add_output(hist);
    }

    const GroundTruth gs = exact_diagonalize(h);
    manifest.finalize("complete", json{{"best_fitness", result.best.fitness},
                                       {"best_n_rot", result.best.genome.rotation_count()},
                                       {"best_n_cx", result.best.genome.cx_count()},
                                       {"exact_ground_energy", gs.energy},
                                       {"population", result.population.size()}});
    std::cout << "best fitness " << result.best.fitness << " (exact ground " << gs.energy << "), "
              << result.best.genome.rotation_count() << " rotations, " << result.best.genome.cx_count()
              << " CX -> " << best_path.string() << "\n";
    return kExitOk;
}

int cmd_train_hea(int n_qubits, int n_layers, const std::string& hamiltonian_path, const std::string& noise_text,
                  std::uint64_t seed, bool seed_given, int iters, const std::string& out_dir) {
    const PauliHamiltonian h = load_hamiltonian_arg(hamiltonian_path);
    if (h.n_qubits() != n_qubits)
        throw ParseError("Hamiltonian has " + std::to_string(h.n_qubits()) + " qubits, requested " +
                         std::to_string(n_qubits));

    TrainConfig cfg;
    cfg.max_iters = iters;
    cfg.noise = parse_noise(noise_text);
    cfg.seed = seed_or_env(seed, seed_given);
    cfg.validate();

    fs::create_directories(out_dir);
    json config_snapshot{{"n_qubits", n_qubits}, {"n_layers", n_layers}, {"iters", iters},
                         {"hamiltonian", hamiltonian_path}, {"noise", noise_text.empty() ? "none" : noise_text}};
    Manifest manifest("train-hea", config_snapshot, cfg.seed, out_dir);

    // HEA angles start from a seeded uniform draw; an all-zero start sits on
    // a stationary point of the cost
    Rng init = Rng(cfg.seed).substream("hea-init");
    const Genome hea = randomize_parameters(build_hea(n_qubits, n_layers), init);
    const TrainResult result = train(hea, h, cfg);
    const Genome trained = hea.with_parameters(result.best_theta);

    const GroundTruth gs = exact_diagonalize(h);
    const double fidelity = cfg.noise.axis == NoiseModel::Axis::kIncoherent
                                ? fidelity_incoherent(trained, gs, cfg.noise.p)
                                : [&] {
                                      Rng eval = Rng(cfg.seed).substream("hea-eval");
                                      return fidelity_coherent(trained, gs, cfg.noise.delta,
                                                               cfg.noise.n_eval_samples, eval).mean;
                                  }();

    const fs::path genome_path = fs::path(out_dir) / "hea_genome.json";
    Individual ind{trained};
    ind.fitness = result.best_cost;
    ind.trained = true;
    write_json_file(best_genome_document(ind, cfg.noise, hamiltonian_path), genome_path.string());
    const fs::path hist = fs::path(out_dir) / "history.csv";
    write_history_csv(result, hist.string());
    manifest.add_output(genome_path);
    manifest.add_output(hist);
    manifest.finalize("complete", json{{"final_cost", result.best_cost},
                                       {"exact_ground_energy", gs.energy},
                                       {"energy_gap", result.best_cost - gs.energy},
                                       {"fidelity", fidelity},
                                       {"parameters", trained.parameters().size()}});
    std::cout << "trained HEA(" << n_qubits << "," << n_layers << "): cost " << result.best_cost
              << ", exact " << gs.energy << ", fidelity " << fidelity << " -> " << genome_path.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep command: resolves circuit sources, then runs both protocols

SweepSpec::TrainedCircuit resolve_circuit(const json& source, const std::string& label, double point,
                                          NoiseModel::Axis axis, const PauliHamiltonian& h, std::uint64_t seed,
                                          int threads) {
    const std::string type = source.at("source").get<std::string>();
    NoiseModel noise = axis == NoiseModel::Axis::kCoherent ? NoiseModel::coherent(point)
                                                           : NoiseModel::incoherent(point);
    if (source.contains("n_train_samples")) noise.n_train_samples = source["n_train_samples"].get<int>();

    if (type == "file") {
        const auto& paths = source.at("paths");
        const std::string key = format_point(point);
        if (!paths.contains(key))
            throw ParseError("circuit \"" + label + "\" has no file for train point " + key);
        const json doc = load_json_file(paths.at(key).get<std::string>());
        // accept either a bare genome or a best-genome document
        const Genome g = doc.contains("genome") ? Genome::from_json(doc.at("genome")) : Genome::from_json(doc);
        return {label, point, g};
    }
    if (type == "hea") {
        const int layers = source.at("n_layers").get<int>();
        TrainConfig cfg;
        cfg.max_iters = source.value("train_iters", 500);
        cfg.noise = noise;
        cfg.seed = Rng(seed).substream("sweep-hea", fnv1a(label + "|" + format_point(point))).seed();
        Rng init = Rng(cfg.seed).substream("hea-init");
        const Genome hea = randomize_parameters(build_hea(h.n_qubits(), layers), init);
        const TrainResult r = train(hea, h, cfg);
        return {label, point, hea.with_parameters(r.best_theta)};
    }
    if (type == "evolve") {
        EvolutionConfig cfg;
        if (source.contains("evolve_config")) cfg = EvolutionConfig::from_json(source["evolve_config"]);
        cfg.train_cfg.noise = noise;
        cfg.seed = Rng(seed).substream("sweep-evolve", fnv1a(label + "|" + format_point(point))).seed();
        cfg.n_threads = threads;
        const EvolutionResult r = run_qceat(h, cfg);
        return {label, point, r.best.genome};
    }
    throw ParseError("unknown circuit source \"" + type + "\" (use file, hea or evolve)");
}

int cmd_sweep(const std::string& spec_path, const std::string& out_dir, int threads) {
    const json doc = load_json_file(spec_path);
    const PauliHamiltonian h = load_hamiltonian_arg(doc.at("hamiltonian").get<std::string>());
    const GroundTruth gs = exact_diagonalize(h);

    SweepSpec spec;
    const std::string axis = doc.value("axis", std::string("coherent"));
    if (axis == "coherent") spec.axis = NoiseModel::Axis::kCoherent;
    else if (axis == "incoherent") spec.axis = NoiseModel::Axis::kIncoherent;
    else throw ParseError("axis must be coherent or incoherent");
    spec.eval_grid = doc.contains("eval_grid")
                         ? doc["eval_grid"].get<std::vector<double>>()
                         : (spec.axis == NoiseModel::Axis::kCoherent ? default_delta_grid() : default_p_grid());
    spec.train_points = doc.at("train_points").get<std::vector<double>>();
    spec.n_eval_samples = doc.value("n_eval_samples", 10000);
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (const char* env = std::getenv("QCEAT_SEED"); env && !doc.contains("seed"))
        spec.seed = std::strtoull(env, nullptr, 10);
    spec.n_threads = threads;

    fs::create_directories(out_dir);
    Manifest manifest("sweep", doc, spec.seed, out_dir);

    for (const auto& source : doc.at("circuits")) {
        const std::string label = source.at("label").get<std::string>();
        for (double point : spec.train_points)
            spec.circuits.push_back(resolve_circuit(source, label, point, spec.axis, h, spec.seed, threads));
    }
    spec.validate();

    const auto imperfection = imperfection_sweep(spec, h, gs);
    const auto training = training_sweep(spec, h, gs);

    const fs::path imp_csv = fs::path(out_dir) / "sweep_imperfection.csv";
    const fs::path tr_csv = fs::path(out_dir) / "sweep_training.csv";
    write_records_csv(imperfection, imp_csv.string());
    write_records_csv(training, tr_csv.string());
    manifest.add_output(imp_csv);
    manifest.add_output(tr_csv);

    for (const auto& [records, tag] :
         {std::make_pair(&imperfection, std::string("imperfection")), {&training, "training"}}) {
        for (const std::string metric : {"energy", "fidelity"}) {
            const fs::path svg = fs::path(out_dir) / ("plot_" + tag + "_" + metric + ".svg");
            write_svg_plot(*records, metric, tag + " " + metric + " (" + axis + " axis)", svg.string());
            manifest.add_output(svg);
        }
    }

    if (doc.contains("baseline")) {
        const std::string baseline = doc["baseline"].get<std::string>();
        const CompareReport report = compare_report(training, baseline);
        const fs::path rep_csv = fs::path(out_dir) / "report.csv";
        write_report_csv(report, rep_csv.string());
        std::ofstream table(fs::path(out_dir) / "gate_table.txt");
        table << render_gate_table(report);
        manifest.add_output(rep_csv);
        manifest.add_output(fs::path(out_dir) / "gate_table.txt");
    }

    manifest.finalize("complete", json{{"records_imperfection", imperfection.size()},
                                       {"records_training", training.size()},
                                       {"exact_ground_energy", gs.energy}});
    std::cout << "wrote " << imperfection.size() << " imperfection and " << training.size()
              << " training records to " << out_dir << "\n";
    return kExitOk;
}

std::vector<SweepRecord> parse_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open records CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<SweepRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 10) throw ParseError(path + ": malformed row \"" + line + "\"");
        SweepRecord r;
        r.label = fields[0];
        r.axis = fields[1];
        r.train_point = std::stod(fields[2]);
        r.eval_point = std::stod(fields[3]);
        r.energy_mean = std::stod(fields[4]);
        r.energy_stderr = std::stod(fields[5]);
        r.fidelity_mean = std::stod(fields[6]);
        r.fidelity_stderr = std::stod(fields[7]);
        r.n_rot = std::stoi(fields[8]);
        r.n_cx = std::stoi(fields[9]);
        records.push_back(std::move(r));
    }
    return records;
}

int cmd_report(const std::string& records_path, const std::string& baseline, const std::string& out_dir) {
    const auto records = parse_records_csv(records_path);
    fs::create_directories(out_dir);
    Manifest manifest("report", json{{"records", records_path}, {"baseline", baseline}}, 0, out_dir);
    const CompareReport report = compare_report(records, baseline);
    const fs::path rep_csv = fs::path(out_dir) / "report.csv";
    write_report_csv(report, rep_csv.string());
    const fs::path table_path = fs::path(out_dir) / "gate_table.txt";
    std::ofstream table(table_path);
    table << render_gate_table(report);
    manifest.add_output(rep_csv);
    manifest.add_output(table_path);
    manifest.finalize("complete", json{{"rows", report.rows.size()}});
    std::cout << render_gate_table(report);
    return kExitOk;
}

int cmd_diag(const std::string& hamiltonian_path) {
    const PauliHamiltonian h = load_hamiltonian_arg(hamiltonian_path);
    const GroundTruth gs = exact_diagonalize(h);
    std::cout.precision(15);
    std::cout << "qubits:               " << h.n_qubits() << "\n"
              << "terms:                " << h.terms().size() << "\n"
              << "unit:                 " << (h.unit().empty() ? "(none)" : h.unit()) << "\n"
              << "ground energy:        " << gs.energy << "\n"
              << "ground degenerate:    " << (gs.degenerate ? "yes" : "no") << "\n";
    if (h.reference_ground_energy())
        std::cout << "file reference:       " << *h.reference_ground_energy() << " (difference "
                  << gs.energy - *h.reference_ground_energy() << ")\n";
    if (h.unit() == "Hartree")
        std::cout << "ground (kcal/mol):    " << gs.energy * kKcalPerHartree << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"QCEAT: evolutionary design of robust variational quantum circuits"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string hamiltonian, config_path, noise_text, out_dir = "qceat_out", resume_path, spec_path;
    std::string records_path, baseline;
    std::uint64_t seed = 0;
    int threads = hardware_threads();
    int n_qubits = 0, n_layers = 0, iters = 500;

    auto* evolve = app.add_subcommand("evolve", "run the evolutionary circuit search");
    evolve->add_option("--hamiltonian", hamiltonian, "Hamiltonian JSON file")->required();
    evolve->add_option("--config", config_path, "evolution config JSON (flags override)");
    evolve->add_option("--noise", noise_text, "none | coherent:<delta> | incoherent:<p>");
    auto* evolve_seed = evolve->add_option("--seed", seed, "master seed (QCEAT_SEED fallback)");
    evolve->add_option("--threads", threads, "worker threads (outputs are thread-count independent)");
    evolve->add_option("--out", out_dir, "output directory");
    evolve->add_option("--resume", resume_path, "population checkpoint to resume from");

    auto* hea = app.add_subcommand("train-hea", "train the hardware-efficient ansatz baseline");
    hea->add_option("n_qubits", n_qubits, "qubit count")->required();
    hea->add_option("n_layers", n_layers, "HEA layer count")->required();
    hea->add_option("--hamiltonian", hamiltonian, "Hamiltonian JSON file")->required();
    hea->add_option("--noise", noise_text, "none | coherent:<delta> | incoherent:<p>");
    auto* hea_seed = hea->add_option("--seed", seed, "master seed (QCEAT_SEED fallback)");
    hea->add_option("--iters", iters, "optimization iterations");
    hea->add_option("--out", out_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "run robustness sweeps from a spec file");
    sweep->add_option("--spec", spec_path, "sweep spec JSON")->required();
    sweep->add_option("--threads", threads, "worker threads");
    sweep->add_option("--out", out_dir, "output directory");

    auto* report = app.add_subcommand("report", "compare sweep records against a baseline");
    report->add_option("--records", records_path, "records CSV from a sweep")->required();
    report->add_option("--baseline", baseline, "baseline circuit label")->required();
    report->add_option("--out", out_dir, "output directory");

    auto* diag = app.add_subcommand("diag", "exact diagonalization utility");
    diag->add_option("--hamiltonian", hamiltonian, "Hamiltonian JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (evolve->parsed())
            return cmd_evolve(hamiltonian, config_path, noise_text, seed, !evolve_seed->empty(), threads,
                              out_dir, resume_path);
        if (hea->parsed())
            return cmd_train_hea(n_qubits, n_layers, hamiltonian, noise_text, seed, !hea_seed->empty(), iters,
                                 out_dir);
        if (sweep->parsed()) return cmd_sweep(spec_path, out_dir, threads);
        if (report->parsed()) return cmd_report(records_path, baseline, out_dir);
        if (diag->parsed()) return cmd_diag(hamiltonian);
    } catch (const ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
