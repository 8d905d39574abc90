// Command-line front end: closed-form metrics, single simulations, sweeps,
// network dimensioning, the toy chain and the fluid ODE.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "p2pswarm/analytic.hpp"
#include "p2pswarm/capacity.hpp"
#include "p2pswarm/experiments.hpp"
#include "p2pswarm/fluid_ode.hpp"
#include "p2pswarm/quadrature.hpp"
#include "p2pswarm/simulator.hpp"
#include "p2pswarm/statistics.hpp"

namespace fs = std::filesystem;
using namespace p2pswarm;

namespace {

enum Exit { kOk = 0, kInvalidConfig = 1, kRuntime = 2, kIo = 3 };

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json analytic_report(const SimConfig& cfg) {
    const auto& p = cfg.params;
    const auto fm = fluid_metrics(p);
    json j;
    j["rate_kind"] = std::string(to_string(p.rate.kind));
    j["lambda"] = p.lambda;
    j["F"] = p.F;
    j["fluid"] = {{"gamma", fm.gamma}, {"beta_f", fm.beta_f}, {"mu_f", fm.mu_f}, {"W_f", fm.W_f},
                  {"N_f", opt_json(fm.N_f)}, {"rho", opt_json(fm.rho)}, {"R_tilde", opt_json(fm.R_tilde)}};
    if (p.rate.finite_range()) {
        const auto hc = hardcore_metrics(p);
        j["hardcore"] = {{"beta_h", hc.beta_h}, {"W_h", hc.W_h}};
    }
    if ((p.rate.kind == RateKind::Tcp || p.rate.kind == RateKind::Udp) && fm.N_f) {
        const double M = heuristic_M(p.rate.kind, *fm.N_f);
        j["heuristic"] = {{"M", M}, {"W", latency_law(p, p.rate.kind)}};
    }
    if (p.rate.kind != RateKind::SnrInfinite || p.rate.alpha > 3.0) {
        j["line_flux"] = line_flux(p);
    }
    const auto& ext = cfg.extensions;
    json e = json::object();
    if (ext.T_S > 0.0) {
        e["seeding"] = {{"T_S", ext.T_S}, {"W", seeder_latency(fm.W_f, ext.T_S)}};
        if (p.rate.kind == RateKind::PerFlowCap) {
            const auto ms = mixed_seeder_uplink(p, ext.T_S);
            e["mixed_seeder_uplink"] = {{"xi", ms.xi}, {"beta_f", ms.beta_f}, {"W_f", ms.W_f}};
        }
    }
    if (ext.U_C > 0.0 && p.rate.finite_range()) {
        const auto s = server_latency(p, ext.U_C);
        e["servers"] = {{"U_C", ext.U_C}, {"chi_C", s.chi_C}, {"W_fluid_assisted", opt_json(s.W_fluid_assisted)},
                        {"W_server_dominated", s.W_server_dominated}};
    }
    if (ext.a > 0.0) {
        const auto a = abandonment_metrics(p, ext.a);
        e["abandonment"] = {{"a", ext.a}, {"mu_f", a.mu_f}, {"abandonment_ratio", a.abandonment_ratio},
                            {"beta_f", a.beta_f}, {"W_f", a.W_f}};
    }
    if (p.rate.kind == RateKind::PerFlowCap) {
        e["per_peer_range"] = per_peer_range(p.lambda, p.F, p.rate.C, p.rate.U);
    }
    if (!e.empty()) j["extensions"] = e;
    return j;
}

void print_flat(const json& j, const std::string& prefix = "") {
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object()) {
            print_flat(v, key);
        } else if (v.is_number_float()) {
            std::printf("%-36s %.10g\n", key.c_str(), v.get<double>());
        } else {
            std::printf("%-36s %s\n", key.c_str(), v.dump().c_str());
        }
    }
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_for_writing(path.string());
    out << text;
    check_written(out, path.string());
}

int cmd_simulate(const std::string& config, const std::string& out_dir) {
    const auto cfg = sim_config_from_json(read_json_file(config));
    const auto stats = run(cfg);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    const fs::path dir(out_dir);
    write_text(dir / "run_summary.json", run_summary_json(cfg, stats).dump(2) + "\n");
    if (!stats.latency_samples.empty() && cfg.params.rate.finite_range()) {
        emit_cdf(latency_cdf_rows(stats.latency_samples, cfg.params), (dir / "latency_cdf.csv").string());
    }
    if (!stats.snapshots.empty() && cfg.params.rate.finite_range()) {
        const auto nn = nn_distance_stats(stats, cfg);
        if (!nn.distances.empty()) emit_cdf(nn_cdf_rows(nn.distances, nn.density, cfg.params), (dir / "nn_cdf.csv").string());
    }
    {
        auto out = open_for_writing((dir / "density_trace.csv").string());
        write_density_trace(out, stats);
        check_written(out, (dir / "density_trace.csv").string());
    }
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << '\n';
    const auto m = estimate_M(stats, cfg.params);
    std::printf("latency samples %zu  M_sim %.6g +- %.2g  conserved %s\n", m.samples, m.M_sim, m.stderr_,
                stats.conserved() ? "yes" : "no");
    return kOk;
}

int cmd_sweep(SweepSpec spec, const std::string& out) {
    const auto res = run_sweep(spec);
    emit_csv(res.rows, out);
    const fs::path base(out);
    emit_json(res.rows, (base.parent_path() / (base.stem().string() + ".json")).string(), res.failures);
    const auto cdfs = emit_detail_cdfs(res, out);
    for (const auto& f : res.failures) {
        std::cerr << "run failed: N_f=" << f.N_f << " seed=" << f.seed << ": " << f.message << '\n';
    }
    for (const auto& r : res.rows) {
        std::printf("N_f %-10g M_sim %-10.5g +- %-8.2g heuristic %-10.5g hardcore %-10.5g samples %llu\n", r.N_f,
                    r.M_sim, r.stderr_, r.M_heuristic, r.M_hardcore, static_cast<unsigned long long>(r.n_latency_samples));
    }
    std::printf("wrote %s and %zu CDF files\n", out.c_str(), cdfs.size());
    return res.failures.empty() ? kOk : kRuntime;
}

int cmd_capacity(const std::string& config, double theta, double K) {
    const auto p = system_params_from_json(read_json_file(config));
    const NetworkModel net{theta, K};
    const auto f = feasibility(p, net);
    json j{{"psi", f.psi},
           {"xi", f.xi},
           {"network_ok", f.network_ok},
           {"link_threshold", f.link_threshold},
           {"access_threshold", f.access_threshold},
           {"min_K_for_theta", min_dimensioning(p, DimensionFix::Theta, theta)},
           {"min_theta_for_K", min_dimensioning(p, DimensionFix::K, K)}};
    print_flat(j);
    return kOk;
}

int cmd_toy(const std::vector<double>& rhos, const std::string& mode_name) {
    DeathMode mode;
    if (mode_name == "pairwise") mode = DeathMode::Pairwise;
    else if (mode_name == "proportional") mode = DeathMode::Proportional;
    else throw ConfigError("unknown mode '" + mode_name + "'");
    std::printf("%-14s %-22s %-22s %s\n", "rho", "chain_mean", "bessel_mean", "abs_diff");
    for (double rho : rhos) {
        if (!(rho > 0.0)) throw ConfigError("rho must be positive");
        const double chain = toy_chain_mean(rho, mode);
        if (mode == DeathMode::Pairwise) {
            const double bessel = toy_bessel_mean(rho);
            std::printf("%-14.8g %-22.16g %-22.16g %.3g\n", rho, chain, bessel, std::abs(chain - bessel));
        } else {
            std::printf("%-14.8g %-22.16g %-22s %.3g\n", rho, chain, "-", std::abs(chain - rho));
        }
    }
    return kOk;
}

int cmd_ode(const std::string& config, int grid, double tmax, double perturb, const std::string& field_out) {
    const auto doc = read_json_file(config);
    const auto p = system_params_from_json(doc);
    double side = 1.0;
    if (doc.contains("sim") && doc.at("sim").contains("torus_side")) {
        side = detail::number_or(doc.at("sim"), "sim", "torus_side", 1.0);
    }
    if (!(perturb >= 0.0 && perturb < 1.0)) throw ConfigError("perturbation amplitude must be in [0, 1)");
    const auto fm = fluid_metrics(p);
    FluidOdeConfig oc;
    oc.lambda = p.lambda;
    oc.F = p.F;
    oc.rate = p.rate;
    oc.side = side;
    oc.grid_n = grid;
    oc.t_end = tmax > 0.0 ? tmax : 20.0 * fm.W_f;
    const auto res = fluid_ode_run(oc, sinusoidal_field(grid, fm.beta_f, perturb));
    double worst = 0.0;
    for (double v : res.field) worst = std::max(worst, std::abs(v / fm.beta_f - 1.0));
    json j{{"beta_f", fm.beta_f},      {"t_end", res.t},          {"steps", res.steps},
           {"dt", res.dt},             {"residual", res.residual}, {"converged", res.converged},
           {"mean", res.mean},         {"min", res.min},          {"max", res.max},
           {"max_relative_deviation", worst}};
    print_flat(j);
    auto out = open_for_writing(field_out);
    out << "ix,iy,x,y,beta\n";
    const double delta = side / grid;
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            out << x << ',' << y << ',' << format_double((x + 0.5) * delta) << ',' << format_double((y + 0.5) * delta)
                << ',' << format_double(res.field[static_cast<std::size_t>(y * grid + x)]) << '\n';
        }
    }
    check_written(out, field_out);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial peer-to-peer swarm model: analytic laws and simulator"};
    app.require_subcommand(1);

    std::string config;
    bool as_json = false;
    auto* analytic = app.add_subcommand("analytic", "closed-form metrics for a configuration");
    analytic->add_option("--config", config, "configuration file (JSON)")->required();
    analytic->add_flag("--json", as_json, "print JSON instead of a table");

    std::string out_dir;
    auto* simulate = app.add_subcommand("simulate", "run one simulation");
    simulate->add_option("--config", config, "configuration file (JSON)")->required();
    simulate->add_option("--out-dir", out_dir, "directory for the run artefacts")->required();

    SweepSpec spec;
    std::string kind_name = "tcp";
    std::string sweep_out = "sweep.csv";
    auto* sweep = app.add_subcommand("sweep", "latency ratio over a grid of N_f values");
    sweep->add_option("--nf", spec.N_f, "comma-separated N_f values")->delimiter(',');
    sweep->add_option("--runs", spec.runs, "runs per point")->capture_default_str();
    sweep->add_option("--wf", spec.W_f, "fluid latency W_f")->capture_default_str();
    sweep->add_option("--r", spec.R, "range R")->capture_default_str();
    sweep->add_option("--c", spec.C, "rate constant C")->capture_default_str();
    sweep->add_option("--kind", kind_name, "tcp or udp")->capture_default_str();
    sweep->add_option("--target-departures", spec.target_departures, "recorded departures per run")->capture_default_str();
    sweep->add_option("--seed", spec.base_seed, "base seed")->capture_default_str();
    sweep->add_option("--threads", spec.threads, "worker threads, 0 for all cores")->capture_default_str();
    sweep->add_option("--detail", spec.detail_points, "N_f values that get CDF files")->delimiter(',');
    sweep->add_option("--out", sweep_out, "results CSV")->capture_default_str();

    double theta = 0.0, K = 0.0;
    auto* capacity = app.add_subcommand("capacity", "line flux versus network capacity");
    capacity->add_option("--config", config, "configuration file (JSON)")->required();
    capacity->add_option("--theta", theta, "router density")->required();
    capacity->add_option("--k", K, "link capacity")->required();

    std::vector<double> rhos{0.01, 0.1, 1.0, 4.0, 10.0, 100.0};
    std::string mode = "pairwise";
    auto* toy = app.add_subcommand("toy", "toy chain mean versus the Bessel formula");
    toy->add_option("--rho", rhos, "comma-separated loads")->delimiter(',');
    toy->add_option("--mode", mode, "pairwise or proportional")->capture_default_str();

    int grid = 64;
    double tmax = 0.0, amp = 0.2;
    std::string field_out = "ode_field.csv";
    auto* ode = app.add_subcommand("ode", "integrate the fluid density equation");
    ode->add_option("--config", config, "configuration file (JSON)")->required();
    ode->add_option("--grid", grid, "cells per side")->capture_default_str();
    ode->add_option("--tmax", tmax, "end time, 0 for 20 W_f")->capture_default_str();
    ode->add_option("--perturb", amp, "relative amplitude of the initial sinusoid")->capture_default_str();
    ode->add_option("--out", field_out, "final field CSV")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInvalidConfig;
    }

    try {
        if (*analytic) {
            const auto report = analytic_report(sim_config_from_json(read_json_file(config)));
            if (as_json) std::cout << report.dump(2) << '\n';
            else print_flat(report);
            return kOk;
        }
        if (*simulate) return cmd_simulate(config, out_dir);
        if (*sweep) {
            try {
                spec.kind = rate_kind_from_string(kind_name);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            return cmd_sweep(spec, sweep_out);
        }
        if (*capacity) return cmd_capacity(config, theta, K);
        if (*toy) return cmd_toy(rhos, mode);
        if (*ode) return cmd_ode(config, grid, tmax, amp, field_out);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kInvalidConfig;
    } catch (const json::exception& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kInvalidConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
