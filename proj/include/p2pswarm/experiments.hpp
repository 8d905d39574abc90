#pragma once

// Scenario construction, configuration documents, parallel sweeps and the
// CSV / JSON artefacts.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "p2pswarm/analytic.hpp"
#include "p2pswarm/simulator.hpp"
#include "p2pswarm/statistics.hpp"

namespace p2pswarm {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Seventeen significant digits, which read back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s.empty() || std::isspace(static_cast<unsigned char>(s.front()))) throw IoError("not a number: '" + s + "'");
    // strtod flags subnormal results with ERANGE too; only overflow is an error
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw IoError("not a number: '" + s + "'");
    if (*end != '\0') throw IoError("trailing characters in number '" + s + "'");
    if (errno == ERANGE && std::isinf(v)) throw IoError("number out of range: '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Configuration documents

namespace detail {

inline void check_keys(const json& section, const std::string& name, std::initializer_list<const char*> allowed) {
    if (!section.is_object()) throw ConfigError("section '" + name + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : section.items()) {
        if (!ok.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
    }
}

inline std::optional<double> number(const json& section, const std::string& name, const char* key) {
    if (!section.contains(key)) return std::nullopt;
    const auto& v = section.at(key);
    if (!v.is_number()) throw ConfigError("'" + name + "." + key + "' must be a number");
    return v.get<double>();
}

inline double number_or(const json& section, const std::string& name, const char* key, double fallback) {
    return number(section, name, key).value_or(fallback);
}

inline std::optional<std::string> text(const json& section, const std::string& name, const char* key) {
    if (!section.contains(key)) return std::nullopt;
    const auto& v = section.at(key);
    if (!v.is_string()) throw ConfigError("'" + name + "." + key + "' must be a string");
    return v.get<std::string>();
}

inline const json& section(const json& doc, const char* name) {
    static const json empty = json::object();
    return doc.contains(name) ? doc.at(name) : empty;
}

}  // namespace detail

inline RateModel rate_model_from_json(const json& r) {
    detail::check_keys(r, "rate", {"kind", "C", "q", "c", "U", "alpha", "R"});
    const auto kind_name = detail::text(r, "rate", "kind");
    if (!kind_name) throw ConfigError("'rate.kind' is required");
    RateModel m;
    try {
        m.kind = rate_kind_from_string(*kind_name);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    m.C = detail::number_or(r, "rate", "C", 1.0);
    m.q = detail::number_or(r, "rate", "q", 0.0);
    m.c = detail::number_or(r, "rate", "c", 0.0);
    m.U = detail::number_or(r, "rate", "U", 0.0);
    m.alpha = detail::number_or(r, "rate", "alpha", 4.0);
    if (m.kind == RateKind::SnrInfinite) {
        if (r.contains("R")) throw ConfigError("'rate.R' is not used by snr_infinite");
        m.R = std::numeric_limits<double>::infinity();
    } else {
        const auto R = detail::number(r, "rate", "R");
        if (!R) throw ConfigError("'rate.R' is required");
        m.R = *R;
    }
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return m;
}

/// Parameters of a configuration document: either arrivals.lambda and file.F,
/// or a scenario{N_f, W_f} section solved for them (tcp and udp only).
inline SystemParams system_params_from_json(const json& doc) {
    detail::check_keys(doc, "config", {"rate", "arrivals", "file", "scenario", "sim", "extensions"});
    if (!doc.contains("rate")) throw ConfigError("section 'rate' is required");
    SystemParams p;
    p.rate = rate_model_from_json(doc.at("rate"));
    const auto& arrivals = detail::section(doc, "arrivals");
    const auto& file = detail::section(doc, "file");
    const auto& scen = detail::section(doc, "scenario");
    detail::check_keys(arrivals, "arrivals", {"lambda"});
    detail::check_keys(file, "file", {"F"});
    detail::check_keys(scen, "scenario", {"N_f", "W_f"});
    if (!scen.empty()) {
        if (doc.contains("arrivals") || doc.contains("file")) {
            throw ConfigError("give either a scenario section or arrivals and file, not both");
        }
        const auto nf = detail::number(scen, "scenario", "N_f");
        const auto wf = detail::number(scen, "scenario", "W_f");
        if (!nf || !wf) throw ConfigError("scenario needs N_f and W_f");
        try {
            const auto s = scenario_from_dimensionless(*nf, *wf, p.rate.R, p.rate.C, p.rate.kind);
            p.lambda = s.lambda;
            p.F = s.F;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else {
        const auto lambda = detail::number(arrivals, "arrivals", "lambda");
        const auto F = detail::number(file, "file", "F");
        if (!lambda || !F) throw ConfigError("arrivals.lambda and file.F are required");
        p.lambda = *lambda;
        p.F = *F;
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return p;
}

/// Expected mean latency used for automatic durations: the heuristic law
/// where it exists, the fluid latency otherwise.
inline double expected_latency(const SystemParams& p) {
    const auto fm = fluid_metrics(p);
    if ((p.rate.kind == RateKind::Tcp || p.rate.kind == RateKind::Udp) && fm.N_f) {
        return heuristic_M(p.rate.kind, *fm.N_f) * fm.W_f;
    }
    return fm.W_f;
}

struct AutoDurations {
    double warmup;
    double measure;
    double drain;
    double snapshot_every;
};

/// Warm-up of ten expected sojourns, a window long enough for
/// `target_departures` arrivals, and a drain of forty expected sojourns.
inline AutoDurations auto_durations(const SystemParams& p, double area, double tau, double target_departures) {
    if (!(target_departures > 0.0)) throw std::invalid_argument("target departures must be positive");
    const double w = expected_latency(p);
    return {std::max(tau, 10.0 * w), std::max(tau, target_departures / (p.lambda * area)), 40.0 * w,
            std::max(tau, w / 20.0)};
}

inline SimConfig sim_config_from_json(const json& doc) {
    SimConfig cfg;
    cfg.params = system_params_from_json(doc);
    const auto& sim = detail::section(doc, "sim");
    detail::check_keys(sim, "sim",
                       {"torus_side", "tau", "warmup", "measure", "drain", "target_departures", "seed",
                        "service_mode", "snapshot_every", "neighbor_rule", "L", "probes", "population_cap"});
    const auto& ext = detail::section(doc, "extensions");
    detail::check_keys(ext, "extensions", {"T_S", "U_C", "a"});
    try {
        cfg.torus = Torus(detail::number_or(sim, "sim", "torus_side", 1.0));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    cfg.tau = detail::number_or(sim, "sim", "tau", 1.0);
    if (!(cfg.tau > 0.0)) throw ConfigError("'sim.tau' must be positive");
    if (sim.contains("seed")) {
        if (!sim.at("seed").is_number_unsigned()) throw ConfigError("'sim.seed' must be a non-negative integer");
        cfg.seed = sim.at("seed").get<std::uint64_t>();
    }
    if (const auto mode = detail::text(sim, "sim", "service_mode")) {
        if (*mode == "accumulate") cfg.service_mode = ServiceMode::Accumulate;
        else if (*mode == "hazard") cfg.service_mode = ServiceMode::Hazard;
        else throw ConfigError("unknown service_mode '" + *mode + "'");
    }
    if (const auto rule = detail::text(sim, "sim", "neighbor_rule")) {
        if (*rule == "fixed_range") cfg.neighbor_rule = NeighborRule::FixedRange;
        else if (*rule == "k_nearest") cfg.neighbor_rule = NeighborRule::KNearest;
        else throw ConfigError("unknown neighbor_rule '" + *rule + "'");
    }
    if (sim.contains("L")) {
        if (!sim.at("L").is_number_unsigned()) throw ConfigError("'sim.L' must be a positive integer");
        cfg.L = sim.at("L").get<std::size_t>();
    }
    if (sim.contains("probes")) {
        if (!sim.at("probes").is_number_unsigned()) throw ConfigError("'sim.probes' must be a non-negative integer");
        cfg.probes_per_snapshot = sim.at("probes").get<std::size_t>();
    }
    if (sim.contains("population_cap")) {
        if (!sim.at("population_cap").is_number_unsigned()) throw ConfigError("'sim.population_cap' must be an integer");
        cfg.population_cap = sim.at("population_cap").get<std::size_t>();
    }
    cfg.extensions.T_S = detail::number_or(ext, "extensions", "T_S", 0.0);
    cfg.extensions.U_C = detail::number_or(ext, "extensions", "U_C", 0.0);
    cfg.extensions.a = detail::number_or(ext, "extensions", "a", 0.0);

    try {
        const auto aut = auto_durations(cfg.params, cfg.torus.area(), cfg.tau,
                                        detail::number_or(sim, "sim", "target_departures", 5000.0));
        if (sim.contains("measure") && sim.contains("target_departures")) {
            throw ConfigError("give either sim.measure or sim.target_departures, not both");
        }
        cfg.warmup = detail::number_or(sim, "sim", "warmup", aut.warmup);
        cfg.measure = detail::number_or(sim, "sim", "measure", aut.measure);
        cfg.drain = detail::number_or(sim, "sim", "drain", aut.drain);
        cfg.snapshot_every = detail::number_or(sim, "sim", "snapshot_every", aut.snapshot_every);
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Scenarios and sweeps

struct SweepSpec {
    std::vector<double> N_f = default_grid();
    int runs = 10;
    double W_f = 100.0;
    double R = 0.1;
    double C = 1.0;
    RateKind kind = RateKind::Tcp;
    std::uint64_t base_seed = 1;
    double target_departures = 5000.0;
    std::vector<double> detail_points{1.0 / 32.0, 1.0, 64.0};
    unsigned threads = 0;  ///< 0 uses the hardware concurrency

    static std::vector<double> default_grid() {
        std::vector<double> g;
        for (int k = -5; k <= 6; ++k) g.push_back(std::ldexp(1.0, k));
        return g;
    }

    void validate() const {
        if (N_f.empty()) throw ConfigError("sweep needs at least one N_f value");
        for (double v : N_f) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("N_f values must be positive");
        }
        if (runs < 1) throw ConfigError("runs must be at least 1");
        if (!(W_f > 0.0 && R > 0.0 && C > 0.0)) throw ConfigError("W_f, R and C must be positive");
        if (R > 0.5) throw ConfigError("range must be at most half the unit torus side");
        if (kind != RateKind::Tcp && kind != RateKind::Udp) throw ConfigError("sweeps support tcp and udp only");
        if (!(target_departures > 0.0)) throw ConfigError("target departures must be positive");
    }
};

inline std::uint64_t sweep_seed(std::uint64_t base, std::size_t point, int run) {
    return base + static_cast<std::uint64_t>(point) * 10000u + static_cast<std::uint64_t>(run);
}

/// Unit torus, tau = 1, durations from auto_durations.
inline SimConfig build_scenario(double N_f, double W_f, double R, double C, RateKind kind,
                                double target_departures = 5000.0, std::uint64_t seed = 1) {
    const auto s = scenario_from_dimensionless(N_f, W_f, R, C, kind);
    SimConfig cfg;
    cfg.params = s.params();
    cfg.torus = Torus(1.0);
    cfg.tau = 1.0;
    const auto d = auto_durations(cfg.params, cfg.torus.area(), cfg.tau, target_departures);
    cfg.warmup = d.warmup;
    cfg.measure = d.measure;
    cfg.drain = d.drain;
    cfg.snapshot_every = d.snapshot_every;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

struct ResultRow {
    double N_f = 0.0;
    double rho = 0.0;
    double lambda = 0.0;
    double F = 0.0;
    double C = 0.0;
    double R = 0.0;
    double W_f = 0.0;
    double W_sim = 0.0;
    double M_sim = 0.0;
    double stderr_ = 0.0;
    double M_heuristic = 0.0;
    double M_hardcore = 0.0;
    std::uint64_t n_latency_samples = 0;
    std::string seeds_used;

    bool operator==(const ResultRow&) const = default;
};

inline const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> cols{"N_f",   "rho",    "lambda",      "F",          "C",
                                               "R",     "W_f",    "W_sim",       "M_sim",      "stderr",
                                               "M_heuristic", "M_hardcore", "n_latency_samples", "seeds_used"};
    return cols;
}

struct RunFailure {
    double N_f = 0.0;
    std::uint64_t seed = 0;
    std::string message;
};

struct DetailCdf {
    double N_f = 0.0;
    SystemParams params;
    std::vector<double> latencies;
    std::vector<double> nn_distances;
    double density = 0.0;  ///< measured peer density for the Poisson reference
};

struct SweepResult {
    std::vector<ResultRow> rows;
    std::vector<DetailCdf> details;
    std::vector<RunFailure> failures;
};

namespace detail {

struct RunOutcome {
    bool ok = false;
    std::string error;
    double M = 0.0;
    double M_stderr = 0.0;
    std::uint64_t samples = 0;
    std::vector<double> latencies;
    std::vector<double> nn;
    double density = 0.0;
};

inline RunOutcome run_one(const SimConfig& cfg, bool keep_samples) {
    RunOutcome out;
    try {
        SimConfig c = cfg;
        c.record_snapshots = keep_samples;
        const auto stats = run(c);
        const auto m = estimate_M(stats, c.params);
        out.M = m.M_sim;
        out.M_stderr = m.stderr_;
        out.samples = m.samples;
        if (m.samples == 0) throw SimulationAbort("no latency samples recorded");
        if (keep_samples) {
            out.latencies = stats.latency_samples;
            auto nn = nn_distance_stats(stats, c);
            out.nn = std::move(nn.distances);
            out.density = nn.density;
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

inline bool is_detail_point(const SweepSpec& spec, double nf) {
    for (double d : spec.detail_points) {
        if (std::abs(d - nf) <= 1e-12 * nf) return true;
    }
    return false;
}

}  // namespace detail

/// Runs every (point, run) pair on a worker pool. Each outcome lands in its
/// own slot and aggregation walks the slots in order, so results do not
/// depend on scheduling.
inline SweepResult run_sweep(const SweepSpec& spec) {
    spec.validate();
    const std::size_t points = spec.N_f.size();
    const std::size_t runs = static_cast<std::size_t>(spec.runs);
    std::vector<SimConfig> configs(points);
    for (std::size_t j = 0; j < points; ++j) {
        configs[j] = build_scenario(spec.N_f[j], spec.W_f, spec.R, spec.C, spec.kind, spec.target_departures);
    }
    std::vector<detail::RunOutcome> slots(points * runs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < slots.size(); task = next++) {
            const std::size_t j = task / runs;
            const int i = static_cast<int>(task % runs);
            SimConfig cfg = configs[j];
            cfg.seed = sweep_seed(spec.base_seed, j, i);
            slots[task] = detail::run_one(cfg, detail::is_detail_point(spec, spec.N_f[j]));
        }
    };
    unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, slots.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepResult res;
    for (std::size_t j = 0; j < points; ++j) {
        const auto& cfg = configs[j];
        const auto fm = fluid_metrics(cfg.params);
        ResultRow row;
        row.N_f = spec.N_f[j];
        row.rho = fm.rho.value_or(0.0);
        row.lambda = cfg.params.lambda;
        row.F = cfg.params.F;
        row.C = spec.C;
        row.R = spec.R;
        row.W_f = fm.W_f;
        row.M_heuristic = heuristic_M(spec.kind, spec.N_f[j]);
        row.M_hardcore = 1.0 / spec.N_f[j];
        std::vector<const detail::RunOutcome*> good;
        std::string seeds;
        DetailCdf cdf;
        for (std::size_t i = 0; i < runs; ++i) {
            const auto& o = slots[j * runs + i];
            const auto seed = sweep_seed(spec.base_seed, j, static_cast<int>(i));
            if (!o.ok) {
                res.failures.push_back({spec.N_f[j], seed, o.error});
                continue;
            }
            good.push_back(&o);
            if (!seeds.empty()) seeds += ';';
            seeds += std::to_string(seed);
            row.n_latency_samples += o.samples;
            cdf.latencies.insert(cdf.latencies.end(), o.latencies.begin(), o.latencies.end());
            cdf.nn_distances.insert(cdf.nn_distances.end(), o.nn.begin(), o.nn.end());
            cdf.density += o.density;
        }
        row.seeds_used = seeds;
        if (good.empty()) {
            row.M_sim = row.W_sim = row.stderr_ = std::numeric_limits<double>::quiet_NaN();
        } else if (good.size() == 1) {
            row.M_sim = good.front()->M;
            row.stderr_ = good.front()->M_stderr;
        } else {
            double mean = 0.0;
            for (const auto* o : good) mean += o->M;
            mean /= static_cast<double>(good.size());
            double ss = 0.0;
            for (const auto* o : good) ss += (o->M - mean) * (o->M - mean);
            row.M_sim = mean;
            row.stderr_ = std::sqrt(ss / static_cast<double>(good.size() - 1) / static_cast<double>(good.size()));
        }
        if (!good.empty()) row.W_sim = row.M_sim * row.W_f;
        res.rows.push_back(row);
        if (detail::is_detail_point(spec, spec.N_f[j]) && !good.empty()) {
            cdf.N_f = spec.N_f[j];
            cdf.params = cfg.params;
            cdf.density /= static_cast<double>(good.size());
            res.details.push_back(std::move(cdf));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Emission

inline std::ofstream open_for_writing(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

inline void check_written(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    const auto& cols = result_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rows) {
        out << format_double(r.N_f) << ',' << format_double(r.rho) << ',' << format_double(r.lambda) << ','
            << format_double(r.F) << ',' << format_double(r.C) << ',' << format_double(r.R) << ','
            << format_double(r.W_f) << ',' << format_double(r.W_sim) << ',' << format_double(r.M_sim) << ','
            << format_double(r.stderr_) << ',' << format_double(r.M_heuristic) << ','
            << format_double(r.M_hardcore) << ',' << r.n_latency_samples << ',' << r.seeds_used << '\n';
    }
}

inline void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    auto out = open_for_writing(path);
    write_results_csv(out, rows);
    check_written(out, path);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    if (!line.empty() && line.back() == sep) parts.emplace_back();
    return parts;
}

inline std::vector<ResultRow> read_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("results file is empty");
    const auto header = split(line, ',');
    if (header != result_columns()) throw IoError("unexpected results header '" + line + "'");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size()) throw IoError("malformed results row '" + line + "'");
        ResultRow r;
        r.N_f = parse_double(f[0]);
        r.rho = parse_double(f[1]);
        r.lambda = parse_double(f[2]);
        r.F = parse_double(f[3]);
        r.C = parse_double(f[4]);
        r.R = parse_double(f[5]);
        r.W_f = parse_double(f[6]);
        r.W_sim = parse_double(f[7]);
        r.M_sim = parse_double(f[8]);
        r.stderr_ = parse_double(f[9]);
        r.M_heuristic = parse_double(f[10]);
        r.M_hardcore = parse_double(f[11]);
        try {
            r.n_latency_samples = std::stoull(f[12]);
        } catch (const std::exception&) {
            throw IoError("bad sample count '" + f[12] + "'");
        }
        r.seeds_used = f[13];
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return read_results_csv(in);
}

/// JSON numbers cannot carry nan or inf; those become null.
inline json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json results_json(const std::vector<ResultRow>& rows, const std::vector<RunFailure>& failures = {}) {
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back({{"N_f", number_json(r.N_f)},
                       {"rho", number_json(r.rho)},
                       {"lambda", number_json(r.lambda)},
                       {"F", number_json(r.F)},
                       {"C", number_json(r.C)},
                       {"R", number_json(r.R)},
                       {"W_f", number_json(r.W_f)},
                       {"W_sim", number_json(r.W_sim)},
                       {"M_sim", number_json(r.M_sim)},
                       {"stderr", number_json(r.stderr_)},
                       {"M_heuristic", number_json(r.M_heuristic)},
                       {"M_hardcore", number_json(r.M_hardcore)},
                       {"n_latency_samples", r.n_latency_samples},
                       {"seeds_used", r.seeds_used}});
    }
    json fails = json::array();
    for (const auto& f : failures) fails.push_back({{"N_f", f.N_f}, {"seed", f.seed}, {"error", f.message}});
    return {{"columns", result_columns()}, {"rows", arr}, {"failures", fails}};
}

/// nlohmann prints doubles in shortest round-trip form, which is exact.
inline void emit_json(const std::vector<ResultRow>& rows, const std::string& path,
                      const std::vector<RunFailure>& failures = {}) {
    auto out = open_for_writing(path);
    out << results_json(rows, failures).dump(2) << '\n';
    check_written(out, path);
}

struct CdfRow {
    double value;
    double ecdf;
    double model_fluid;
    double model_hardcore;
};

inline const std::vector<std::string>& cdf_columns() {
    static const std::vector<std::string> cols{"value", "ecdf", "model_fluid", "model_hardcore"};
    return cols;
}

inline constexpr std::size_t kCdfMaxPoints = 2000;

/// Latency CDF against the exponential of mean W_f and the hard-core law.
inline std::vector<CdfRow> latency_cdf_rows(const std::vector<double>& latencies, const SystemParams& p) {
    const double wf = fluid_metrics(p).W_f;
    const double wh = hardcore_metrics(p).W_h;
    std::vector<CdfRow> rows;
    for (const auto& pt : downsample(ecdf(latencies), kCdfMaxPoints)) {
        rows.push_back({pt.value, pt.p, -std::expm1(-pt.value / wf), hardcore_latency_cdf(pt.value, wh)});
    }
    return rows;
}

/// Nearest-neighbour CDF against a Poisson field of the measured density and
/// a hard-core field: exclusion below R, Poisson of the hard-core density beyond.
inline std::vector<CdfRow> nn_cdf_rows(const std::vector<double>& distances, double density, const SystemParams& p) {
    const double R = p.rate.R;
    const double bh = hardcore_metrics(p).beta_h;
    std::vector<CdfRow> rows;
    for (const auto& pt : downsample(ecdf(distances), kCdfMaxPoints)) {
        const double d = pt.value;
        const double hc = d < R ? 0.0 : -std::expm1(-bh * std::numbers::pi * (d * d - R * R));
        rows.push_back({d, pt.p, poisson_nn_cdf(density, d), hc});
    }
    return rows;
}

inline void write_cdf_csv(std::ostream& out, const std::vector<CdfRow>& rows) {
    out << "value,ecdf,model_fluid,model_hardcore\n";
    for (const auto& r : rows) {
        out << format_double(r.value) << ',' << format_double(r.ecdf) << ',' << format_double(r.model_fluid) << ','
            << format_double(r.model_hardcore) << '\n';
    }
}

inline void emit_cdf(const std::vector<CdfRow>& rows, const std::string& path) {
    auto out = open_for_writing(path);
    write_cdf_csv(out, rows);
    check_written(out, path);
}

inline std::vector<CdfRow> read_cdf_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split(line, ',') != cdf_columns()) throw IoError("unexpected CDF header");
    std::vector<CdfRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 4) throw IoError("malformed CDF row '" + line + "'");
        rows.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3])});
    }
    return rows;
}

/// File-name tag of a detail point, e.g. 0.03125 -> "nf0.03125".
inline std::string nf_tag(double nf) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "nf%g", nf);
    return buf;
}

/// Writes `<stem>_latency_cdf_<tag>.csv` and `<stem>_nn_cdf_<tag>.csv` beside
/// the results file; returns the paths written.
inline std::vector<std::string> emit_detail_cdfs(const SweepResult& res, const std::string& results_path) {
    namespace fs = std::filesystem;
    const fs::path base(results_path);
    const auto dir = base.parent_path();
    const auto stem = base.stem().string();
    std::vector<std::string> written;
    for (const auto& d : res.details) {
        const auto lat = (dir / (stem + "_latency_cdf_" + nf_tag(d.N_f) + ".csv")).string();
        emit_cdf(latency_cdf_rows(d.latencies, d.params), lat);
        written.push_back(lat);
        if (!d.nn_distances.empty()) {
            const auto nn = (dir / (stem + "_nn_cdf_" + nf_tag(d.N_f) + ".csv")).string();
            emit_cdf(nn_cdf_rows(d.nn_distances, d.density, d.params), nn);
            written.push_back(nn);
        }
    }
    return written;
}

inline void write_density_trace(std::ostream& out, const SimStats& stats) {
    out << "time,leechers,seeders\n";
    for (const auto& p : stats.density_trace) out << format_double(p.time) << ',' << p.leechers << ',' << p.seeders << '\n';
}

/// Compact JSON description of one simulation run.
inline json run_summary_json(const SimConfig& cfg, const SimStats& stats) {
    const auto fm = fluid_metrics(cfg.params);
    json j;
    j["rate_kind"] = std::string(to_string(cfg.params.rate.kind));
    j["lambda"] = cfg.params.lambda;
    j["F"] = cfg.params.F;
    j["seed"] = cfg.seed;
    j["service_mode"] = std::string(to_string(cfg.service_mode));
    j["neighbor_rule"] = std::string(to_string(cfg.neighbor_rule));
    j["warmup"] = cfg.warmup;
    j["measure"] = cfg.measure;
    j["drain"] = cfg.drain;
    j["W_f"] = fm.W_f;
    j["beta_f"] = fm.beta_f;
    j["N_f"] = fm.N_f ? json(*fm.N_f) : json(nullptr);
    j["steps"] = stats.steps;
    j["end_time"] = stats.end_time;
    j["arrivals"] = stats.arrivals;
    j["completions"] = stats.completions;
    j["abandonments"] = stats.abandonments;
    j["abandon_count"] = stats.abandon_count;
    j["seeds_started"] = stats.seeds_started;
    j["seeder_expiries"] = stats.seeder_expiries;
    j["final_leechers"] = stats.final_leechers;
    j["final_seeders"] = stats.final_seeders;
    j["cohort_size"] = stats.cohort_size;
    j["cohort_unfinished"] = stats.cohort_unfinished;
    j["conserved"] = stats.conserved();
    j["n_latency_samples"] = stats.latency_samples.size();
    j["snapshots"] = stats.snapshots.size();
    if (!stats.latency_samples.empty()) {
        const auto m = estimate_M(stats, cfg.params);
        j["W_sim"] = m.W_sim;
        j["M_sim"] = m.M_sim;
        j["stderr"] = m.stderr_;
        j["ks_exponential"] = ks_exponential_fit(stats.latency_samples);
        const auto little = littles_law(stats, cfg);
        j["little"] = {{"time_average_population", little.time_average_population},
                       {"predicted", little.predicted},
                       {"relative_error", little.relative_error}};
    }
    if (!stats.snapshots.empty()) {
        const auto nn = nn_distance_stats(stats, cfg);
        j["nn"] = {{"mean", nn.mean}, {"poisson_mean", nn.poisson_mean}, {"within_range", nn.within_range}};
        const auto rep = repulsion_summary(stats);
        j["repulsion"] = {{"palm_mean", rep.palm_mean},
                          {"stationary_mean", rep.stationary_mean},
                          {"batches", rep.batches},
                          {"batches_repulsive", rep.batches_repulsive}};
        if (cfg.neighbor_rule == NeighborRule::FixedRange) {
            const auto flux = mean_line_flux(stats);
            j["line_flux"] = {{"mean", flux.mean}, {"stderr", flux.stderr_}};
        }
    }
    j["warnings"] = stats.warnings;
    return j;
}

}  // namespace p2pswarm
