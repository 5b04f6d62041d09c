#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qceat/error.hpp"
#include "qceat/genome.hpp"
#include "qceat/parallel.hpp"
#include "qceat/pauli.hpp"
#include "qceat/simulate.hpp"

namespace qceat {

/// Display-only conversion for molecular energies.
inline constexpr double kKcalPerHartree = 627.51;

inline std::vector<double> default_delta_grid() { return {0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2}; }
inline std::vector<double> default_p_grid() { return {0.0, 0.02, 0.04, 0.06, 0.08, 0.1}; }

/// A robustness sweep over trained circuits. Each entry of `circuits` is a
/// circuit already trained at its train_point (the caller trains, loads or
/// evolves it); the sweep only evaluates.
struct SweepSpec {
    struct TrainedCircuit {
        std::string label;
        double train_point = 0.0;
        Genome genome;
    };

    NoiseModel::Axis axis = NoiseModel::Axis::kCoherent;
    std::vector<double> train_points;
    std::vector<double> eval_grid;
    int n_eval_samples = 10000;
    DeltaConvention convention = DeltaConvention::kStdDev;
    std::uint64_t seed = 0;
    int n_threads = 1;
    std::vector<TrainedCircuit> circuits;

    void validate() const {
        if (eval_grid.empty()) throw Error("eval grid must not be empty");
        if (train_points.empty()) throw Error("train points must not be empty");
        for (const auto* grid : {&train_points, &eval_grid}) {
            if (!std::is_sorted(grid->begin(), grid->end())) throw Error("grids must be sorted ascending");
            for (double v : *grid) {
                if (v < 0) throw Error("grid values must be non-negative");
                if (axis == NoiseModel::Axis::kIncoherent && v > 1) throw Error("p grid must lie in [0, 1]");
            }
        }
        if (n_eval_samples < 1) throw Error("n_eval_samples must be positive");
        if (circuits.empty()) throw Error("sweep needs at least one circuit");
    }

    const Genome& circuit_at(const std::string& label, double train_point) const {
        for (const auto& c : circuits)
            if (c.label == label && c.train_point == train_point) return c.genome;
        throw Error("missing trained circuit for label \"" + label + "\" at train point " +
                    std::to_string(train_point));
    }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& c : circuits)
            if (std::find(out.begin(), out.end(), c.label) == out.end()) out.push_back(c.label);
        return out;
    }
};

struct SweepRecord {
    std::string label;
    std::string axis;  // "coherent" or "incoherent"
    double train_point = 0.0;
    double eval_point = 0.0;
    double energy_mean = 0.0;
    double energy_stderr = 0.0;
    double fidelity_mean = 0.0;
    double fidelity_stderr = 0.0;
    int n_rot = 0;
    int n_cx = 0;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline Rng point_rng(std::uint64_t seed, const std::string& label, double train_point, double eval_point) {
    const std::string tag = label + "|" + format_double(train_point) + "|" + format_double(eval_point);
    return Rng(seed).substream(tag);
}

inline SweepRecord evaluate_point(const SweepSpec& spec, const PauliHamiltonian& h, const GroundTruth& gs,
                                  const std::string& label, double train_point, double eval_point) {
    const Genome& genome = spec.circuit_at(label, train_point);
    SweepRecord rec;
    rec.label = label;
    rec.train_point = train_point;
    rec.eval_point = eval_point;
    rec.n_rot = genome.rotation_count();
    rec.n_cx = genome.cx_count();
    if (spec.axis == NoiseModel::Axis::kCoherent) {
        rec.axis = "coherent";
        Rng rng = point_rng(spec.seed, label, train_point, eval_point);
        Rng e_rng = rng.substream("energy"), f_rng = rng.substream("fidelity");
        const auto e = energy_coherent(genome, h, eval_point, spec.n_eval_samples, e_rng, spec.convention);
        const auto f = fidelity_coherent(genome, gs, eval_point, spec.n_eval_samples, f_rng, spec.convention);
        rec.energy_mean = e.mean;
        rec.energy_stderr = e.std_err;
        rec.fidelity_mean = f.mean;
        rec.fidelity_stderr = f.std_err;
    } else {
        rec.axis = "incoherent";
        const QuantumState rho = run_mixed(genome, QuantumState::zero_state(genome.n_qubits()), eval_point);
        rec.energy_mean = expectation(h, rho);
        rec.fidelity_mean = ground_state_fidelity(gs, rho);
    }
    return rec;
}

}  // namespace detail

/// Imperfection-robustness protocol: each circuit is evaluated at the very
/// noise level it was trained at, one record per (label, train_point).
inline std::vector<SweepRecord> imperfection_sweep(const SweepSpec& spec, const PauliHamiltonian& h,
                                                   const GroundTruth& gs) {
    spec.validate();
    struct Job {
        std::string label;
        double point;
    };
    std::vector<Job> jobs;
    for (const auto& label : spec.labels())
        for (double t : spec.train_points) {
            (void)spec.circuit_at(label, t);  // fail fast on missing circuits
            jobs.push_back({label, t});
        }
    std::vector<SweepRecord> records(jobs.size());
    parallel_for(jobs.size(), spec.n_threads, [&](std::size_t i) {
        records[i] = detail::evaluate_point(spec, h, gs, jobs[i].label, jobs[i].point, jobs[i].point);
    });
    return records;
}

/// Training-robustness protocol: circuit parameters stay frozen at their
/// train_point optimum while the deployment noise level runs over the
/// whole eval grid. Full (label, train_point) x eval_grid cross product.
inline std::vector<SweepRecord> training_sweep(const SweepSpec& spec, const PauliHamiltonian& h,
                                               const GroundTruth& gs) {
    spec.validate();
    struct Job {
        std::string label;
        double train_point;
        double eval_point;
    };
    std::vector<Job> jobs;
    for (const auto& label : spec.labels())
        for (double t : spec.train_points) {
            (void)spec.circuit_at(label, t);
            for (double e : spec.eval_grid) jobs.push_back({label, t, e});
        }
    std::vector<SweepRecord> records(jobs.size());
    parallel_for(jobs.size(), spec.n_threads, [&](std::size_t i) {
        records[i] = detail::evaluate_point(spec, h, gs, jobs[i].label, jobs[i].train_point, jobs[i].eval_point);
    });
    return records;
}

inline void write_records_csv(const std::vector<SweepRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write CSV: " + path);
    out << "label,axis,train_point,eval_point,energy_mean,energy_stderr,fidelity_mean,fidelity_stderr,n_rot,n_cx\n";
    for (const auto& r : records) {
        out << r.label << "," << r.axis << "," << detail::format_double(r.train_point) << ","
            << detail::format_double(r.eval_point) << "," << detail::format_double(r.energy_mean) << ","
            << detail::format_double(r.energy_stderr) << "," << detail::format_double(r.fidelity_mean) << ","
            << detail::format_double(r.fidelity_stderr) << "," << r.n_rot << "," << r.n_cx << "\n";
    }
}

// ---------------------------------------------------------------------------
// comparison report

struct CompareReport {
    struct Row {
        std::string label;
        double train_point;
        double eval_point;
        double energy_delta;   // energy - baseline energy at the same eval point
        double fidelity_gap;   // fidelity - baseline fidelity
    };
    struct GateRow {
        std::string label;
        double train_point;
        int n_rot;
        int n_cx;
    };
    std::string baseline_label;
    std::vector<Row> rows;
    std::vector<GateRow> gate_table;
};

/// Per eval point, the energy and fidelity gaps of every circuit against
/// the named baseline, plus a gate-count table (one row per trained
/// circuit, columns #R and #CX).
inline CompareReport compare_report(const std::vector<SweepRecord>& records, const std::string& baseline_label) {
    if (records.empty()) throw Error("cannot report on an empty record set");
    std::vector<const SweepRecord*> baseline;
    for (const auto& r : records)
        if (r.label == baseline_label) baseline.push_back(&r);
    if (baseline.empty()) throw Error("baseline label \"" + baseline_label + "\" not present in records");

    auto baseline_at = [&](double eval_point, double train_point) -> const SweepRecord* {
        const SweepRecord* fallback = nullptr;
        for (const auto* b : baseline) {
            if (b->eval_point != eval_point) continue;
            if (b->train_point == train_point) return b;
            if (!fallback) fallback = b;
        }
        return fallback;
    };

    CompareReport report;
    report.baseline_label = baseline_label;
    for (const auto& r : records) {
        const SweepRecord* b = baseline_at(r.eval_point, r.train_point);
        if (!b) continue;  // baseline not evaluated at this point
        report.rows.push_back({r.label, r.train_point, r.eval_point, r.energy_mean - b->energy_mean,
                               r.fidelity_mean - b->fidelity_mean});
    }
    std::vector<std::pair<std::string, double>> seen;
    for (const auto& r : records) {
        const auto key = std::make_pair(r.label, r.train_point);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        report.gate_table.push_back({r.label, r.train_point, r.n_rot, r.n_cx});
    }
    return report;
}

inline void write_report_csv(const CompareReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report CSV: " + path);
    out << "label,train_point,eval_point,energy_delta_vs_" << report.baseline_label << ",fidelity_gap\n";
    for (const auto& r : report.rows)
        out << r.label << "," << detail::format_double(r.train_point) << ","
            << detail::format_double(r.eval_point) << "," << detail::format_double(r.energy_delta) << ","
            << detail::format_double(r.fidelity_gap) << "\n";
}

/// Gate-count table in the layout of the paper-style summary: one row per
/// circuit label, #R and #CX per train point.
inline std::string render_gate_table(const CompareReport& report) {
    std::vector<double> points;
    for (const auto& g : report.gate_table)
        if (std::find(points.begin(), points.end(), g.train_point) == points.end())
            points.push_back(g.train_point);
    std::sort(points.begin(), points.end());
    std::vector<std::string> labels;
    for (const auto& g : report.gate_table)
        if (std::find(labels.begin(), labels.end(), g.label) == labels.end()) labels.push_back(g.label);

    std::string out = "circuit";
    for (double p : points) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), " | #R(%g) #CX(%g)", p, p);
        out += buf;
    }
    out += "\n";
    for (const auto& label : labels) {
        out += label;
        for (double p : points) {
            const CompareReport::GateRow* row = nullptr;
            for (const auto& g : report.gate_table)
                if (g.label == label && g.train_point == p) row = &g;
            char buf[64];
            if (row)
                std::snprintf(buf, sizeof(buf), " | %d %d", row->n_rot, row->n_cx);
            else
                std::snprintf(buf, sizeof(buf), " | - -");
            out += buf;
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// native SVG line plots

/// Minimal polyline plot: one series per (label, train_point), x = eval
/// point, y = the chosen metric. Deterministic output.
inline void write_svg_plot(const std::vector<SweepRecord>& records, const std::string& metric,
                           const std::string& title, const std::string& path) {
    if (records.empty()) throw Error("cannot plot an empty record set");
    auto value = [&](const SweepRecord& r) {
        if (metric == "energy") return r.energy_mean;
        if (metric == "fidelity") return r.fidelity_mean;
        throw Error("unknown metric \"" + metric + "\"");
    };

    std::map<std::pair<std::string, double>, std::vector<const SweepRecord*>> series;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : records) {
        series[{r.label, r.train_point}].push_back(&r);
        xmin = std::min(xmin, r.eval_point);
        xmax = std::max(xmax, r.eval_point);
        ymin = std::min(ymin, value(r));
        ymax = std::max(ymax, value(r));
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const int width = 640, height = 440, ml = 70, mr = 20, mt = 40, mb = 50;
    auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto Y = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::ofstream out(path);
    if (!out) throw Error("cannot write SVG: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title
        << "</text>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + k * (xmax - xmin) / 4, yv = ymin + k * (ymax - ymin) / 4;
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"11\">%.3g</text>\n",
                      X(xv), height - mb + 18, xv);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">%.4g</text>\n", ml - 6,
                      Y(yv) + 4, yv);
        out << buf;
    }
    int color = 0, legend_y = mt + 6;
    for (const auto& [key, pts] : series) {
        std::vector<const SweepRecord*> sorted = pts;
        std::sort(sorted.begin(), sorted.end(),
                  [](const SweepRecord* a, const SweepRecord* b) { return a->eval_point < b->eval_point; });
        const char* stroke = palette[color % 10];
        out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (const auto* r : sorted) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", X(r->eval_point), Y(value(*r)));
            out << buf;
        }
        out << "\"/>\n";
        for (const auto* r : sorted) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\"/>\n",
                          X(r->eval_point), Y(value(*r)), stroke);
            out << buf;
        }
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">%s (train %g)</text>\n",
                      width - mr - 190, legend_y, stroke, key.first.c_str(), key.second);
        out << buf;
        legend_y += 16;
        ++color;
    }
    out << "</svg>\n";
}

}  // namespace qceat
