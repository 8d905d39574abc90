#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "p2pswarm/experiments.hpp"

using namespace p2pswarm;
namespace fs = std::filesystem;

namespace {

json parse(const char* text) { return json::parse(text); }

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("p2pswarm_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int cli(const std::string& args) {
    const std::string cmd = std::string("\"") + P2PSWARM_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const char* name) { return std::string(P2PSWARM_CONFIG_DIR) + "/" + name; }

SweepSpec small_sweep(unsigned threads) {
    SweepSpec s;
    s.N_f = {0.5, 2.0};
    s.runs = 3;
    s.target_departures = 300;
    s.detail_points = {2.0};
    s.threads = threads;
    s.base_seed = 40;
    return s;
}

const SweepResult& sweep_result() {
    static const SweepResult r = run_sweep(small_sweep(1));
    return r;
}

}  // namespace

TEST(Scenario, BuildMatchesDimensionlessInputs) {
    const auto c = build_scenario(64.0, 100.0, 0.1, 1.0, RateKind::Tcp, 5000.0, 3);
    EXPECT_NEAR(c.params.lambda, 20.371832715762604, 1e-9);
    EXPECT_NEAR(c.params.F, 128000.0, 1e-9);
    const auto fm = fluid_metrics(c.params);
    EXPECT_NEAR(fm.W_f, 100.0, 1e-9);
    EXPECT_NEAR(*fm.N_f, 64.0, 1e-9);
    EXPECT_EQ(c.seed, 3u);
    EXPECT_DOUBLE_EQ(c.tau, 1.0);
    EXPECT_NEAR(c.measure, 5000.0 / c.params.lambda, 1e-9);
    const double w = expected_latency(c.params);
    EXPECT_NEAR(c.warmup, 10.0 * w, 1e-9);
    EXPECT_NEAR(c.drain, 40.0 * w, 1e-9);
    const auto u = build_scenario(1.0 / 32.0, 100.0, 0.1, 1.0, RateKind::Udp);
    EXPECT_NEAR(u.params.F, 1.0 / 32.0 * 100.0, 1e-12);
    EXPECT_EQ(sweep_seed(1, 2, 3), 20004u);
}

TEST(Config, ParsesShippedConfigs) {
    for (const char* name : {"fluid_nf64.json", "hardcore_nf1_32.json", "explicit_udp.json", "seeding_nf64.json"}) {
        EXPECT_NO_THROW(sim_config_from_json(read_json_file(config_path(name)))) << name;
    }
    const auto c = sim_config_from_json(read_json_file(config_path("seeding_nf64.json")));
    EXPECT_DOUBLE_EQ(c.extensions.T_S, 100.0);
    EXPECT_EQ(c.seed, 5u);
}

TEST(Config, ExplicitRoundTripFields) {
    const auto c = sim_config_from_json(parse(R"({
        "rate": {"kind": "per_flow_cap", "C": 2, "U": 40, "R": 0.2},
        "arrivals": {"lambda": 3}, "file": {"F": 50},
        "sim": {"tau": 0.5, "warmup": 10, "measure": 20, "drain": 5, "seed": 9,
                "service_mode": "hazard", "neighbor_rule": "k_nearest", "L": 6,
                "snapshot_every": 2, "probes": 10, "population_cap": 999, "torus_side": 2},
        "extensions": {"U_C": 0.5, "a": 0.01}})"));
    EXPECT_EQ(c.params.rate.kind, RateKind::PerFlowCap);
    EXPECT_DOUBLE_EQ(c.params.rate.U, 40.0);
    EXPECT_DOUBLE_EQ(c.params.lambda, 3.0);
    EXPECT_DOUBLE_EQ(c.tau, 0.5);
    EXPECT_DOUBLE_EQ(c.measure, 20.0);
    EXPECT_EQ(c.service_mode, ServiceMode::Hazard);
    EXPECT_EQ(c.neighbor_rule, NeighborRule::KNearest);
    EXPECT_EQ(c.L, 6u);
    EXPECT_EQ(c.probes_per_snapshot, 10u);
    EXPECT_EQ(c.population_cap, 999u);
    EXPECT_DOUBLE_EQ(c.torus.side(), 2.0);
    EXPECT_DOUBLE_EQ(c.extensions.a, 0.01);
}

TEST(Config, Rejections) {
    const char* bad[] = {
        R"({"arrivals": {"lambda": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "quic", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "tcp"}, "arrivals": {"lambda": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1, "X": 1}, "arrivals": {"lambda": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": -1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "scenario": {"N_f": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "scenario": {"N_f": 1, "W_f": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "per_flow_cap", "R": 0.1, "U": 1}, "scenario": {"N_f": 1, "W_f": 1}})",
        R"({"rate": {"kind": "snr_infinite", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "sim": {"tau": 0}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "sim": {"seed": -1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "sim": {"service_mode": "x"}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "sim": {"measure": 1, "target_departures": 5}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "sim": {"torus_side": 0.1}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "extensions": {"T_S": -2}})",
        R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}, "file": {"F": 1}, "extra": {}})",
        R"({"rate": {"kind": "tcp", "R": "wide"}, "arrivals": {"lambda": 1}, "file": {"F": 1}})",
    };
    for (const char* text : bad) EXPECT_THROW(sim_config_from_json(parse(text)), ConfigError) << text;
    EXPECT_THROW(read_json_file("/nonexistent/config.json"), IoError);
    const auto dir = scratch("badjson");
    std::ofstream(dir / "x.json") << "{ not json";
    EXPECT_THROW(read_json_file((dir / "x.json").string()), ConfigError);
}

TEST(Sweep, SpecValidation) {
    auto expect_bad = [](auto mutate) {
        SweepSpec s;
        mutate(s);
        EXPECT_THROW(s.validate(), ConfigError);
    };
    expect_bad([](SweepSpec& s) { s.N_f.clear(); });
    expect_bad([](SweepSpec& s) { s.N_f = {0.0}; });
    expect_bad([](SweepSpec& s) { s.runs = 0; });
    expect_bad([](SweepSpec& s) { s.R = 0.6; });
    expect_bad([](SweepSpec& s) { s.kind = RateKind::PerFlowCap; });
    expect_bad([](SweepSpec& s) { s.target_departures = 0; });
    EXPECT_EQ(SweepSpec{}.N_f.size(), 12u);
    EXPECT_EQ(SweepSpec{}.N_f.front(), 1.0 / 32.0);
    EXPECT_EQ(SweepSpec{}.N_f.back(), 64.0);
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
    const auto& one = sweep_result();
    const auto many = run_sweep(small_sweep(4));
    ASSERT_EQ(one.rows.size(), 2u);
    EXPECT_EQ(one.rows, many.rows);
    ASSERT_EQ(one.details.size(), 1u);
    EXPECT_EQ(one.details[0].latencies, many.details[0].latencies);
    EXPECT_TRUE(one.failures.empty());
}

TEST(Sweep, RowInvariants) {
    for (const auto& r : sweep_result().rows) {
        EXPECT_NEAR(r.W_f, 100.0, 1e-9);
        EXPECT_NEAR(r.rho, 2.0 * r.N_f * r.N_f / std::numbers::pi, 1e-9);
        EXPECT_NEAR(r.M_hardcore, 1.0 / r.N_f, 1e-15);
        EXPECT_NEAR(r.M_heuristic, heuristic_M(RateKind::Tcp, r.N_f), 1e-15);
        EXPECT_NEAR(r.W_sim, r.M_sim * r.W_f, 1e-9 * r.W_sim);
        EXPECT_GT(r.stderr_, 0.0);
        EXPECT_GT(r.n_latency_samples, 600u);
        EXPECT_GE(r.M_sim, 1.0 - 3.0 * r.stderr_);
        EXPECT_EQ(std::count(r.seeds_used.begin(), r.seeds_used.end(), ';'), 2);
    }
    EXPECT_EQ(sweep_result().rows[1].seeds_used, "10040;10041;10042");
}

TEST(Csv, HeaderOnlyWhenEmpty) {
    std::ostringstream out;
    write_results_csv(out, {});
    EXPECT_EQ(out.str(),
              "N_f,rho,lambda,F,C,R,W_f,W_sim,M_sim,stderr,M_heuristic,M_hardcore,n_latency_samples,seeds_used\n");
    std::istringstream in(out.str());
    EXPECT_TRUE(read_results_csv(in).empty());
}

TEST(Csv, RoundTripIsBitExact) {
    auto rows = sweep_result().rows;
    ResultRow odd;
    odd.N_f = 0.1 + 0.2;
    odd.M_sim = std::numeric_limits<double>::quiet_NaN();
    odd.W_sim = std::numeric_limits<double>::infinity();
    odd.stderr_ = 5e-324;
    rows.push_back(odd);
    const auto dir = scratch("csv");
    const auto path = (dir / "r.csv").string();
    emit_csv(rows, path);
    const auto back = read_csv(path);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) EXPECT_EQ(back[i], rows[i]);
    EXPECT_TRUE(std::isnan(back.back().M_sim));
    EXPECT_EQ(back.back().W_sim, odd.W_sim);
    EXPECT_EQ(back.back().stderr_, odd.stderr_);
    EXPECT_EQ(back.back().N_f, odd.N_f);
    std::istringstream bad("N_f,rho\n1,2\n");
    EXPECT_THROW(read_results_csv(bad), IoError);
    EXPECT_THROW(read_csv((dir / "missing.csv").string()), IoError);
    EXPECT_THROW(emit_csv(rows, (dir / "no" / "such" / "dir.csv").string()), IoError);
}

TEST(Json, SchemaAndNulls) {
    auto rows = sweep_result().rows;
    rows[0].M_sim = std::numeric_limits<double>::quiet_NaN();
    const auto j = results_json(rows, {{0.5, 7, "boom"}});
    EXPECT_EQ(j.at("columns").get<std::vector<std::string>>(), result_columns());
    ASSERT_EQ(j.at("rows").size(), rows.size());
    for (const auto& r : j.at("rows")) {
        for (const auto& c : result_columns()) EXPECT_TRUE(r.contains(c)) << c;
    }
    EXPECT_TRUE(j.at("rows")[0].at("M_sim").is_null());
    EXPECT_EQ(j.at("rows")[1].at("M_sim").get<double>(), rows[1].M_sim);
    EXPECT_EQ(j.at("failures")[0].at("error"), "boom");
    // dumped text parses back to the same doubles
    const auto again = json::parse(j.dump());
    EXPECT_EQ(again.at("rows")[1].at("W_sim").get<double>(), rows[1].W_sim);
}

TEST(Cdf, ColumnsAndModels) {
    const auto& d = sweep_result().details.at(0);
    const auto lat = latency_cdf_rows(d.latencies, d.params);
    ASSERT_FALSE(lat.empty());
    EXPECT_LE(lat.size(), kCdfMaxPoints);
    EXPECT_DOUBLE_EQ(lat.back().ecdf, 1.0);
    const double wf = fluid_metrics(d.params).W_f;
    const double wh = hardcore_metrics(d.params).W_h;
    for (const auto& r : lat) {
        EXPECT_NEAR(r.model_fluid, 1.0 - std::exp(-r.value / wf), 1e-12);
        EXPECT_NEAR(r.model_hardcore, 1.0 - 0.5 * std::exp(-r.value / (2.0 * wh)), 1e-12);
    }
    for (std::size_t i = 1; i < lat.size(); ++i) EXPECT_GT(lat[i].ecdf, lat[i - 1].ecdf);
    const auto nn = nn_cdf_rows(d.nn_distances, d.density, d.params);
    ASSERT_FALSE(nn.empty());
    const double R = d.params.rate.R;
    const double bh = hardcore_metrics(d.params).beta_h;
    for (const auto& r : nn) {
        EXPECT_NEAR(r.model_fluid, 1.0 - std::exp(-d.density * std::numbers::pi * r.value * r.value), 1e-12);
        if (r.value < R) EXPECT_EQ(r.model_hardcore, 0.0);
        else EXPECT_NEAR(r.model_hardcore, 1.0 - std::exp(-bh * std::numbers::pi * (r.value * r.value - R * R)), 1e-12);
    }
    std::ostringstream out;
    write_cdf_csv(out, lat);
    EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "value,ecdf,model_fluid,model_hardcore");
    std::istringstream in(out.str());
    const auto back = read_cdf_csv(in);
    ASSERT_EQ(back.size(), lat.size());
    EXPECT_EQ(back[3].value, lat[3].value);
    EXPECT_EQ(back[3].model_hardcore, lat[3].model_hardcore);
}

TEST(Cdf, DetailFileNames) {
    EXPECT_EQ(nf_tag(1.0 / 32.0), "nf0.03125");
    EXPECT_EQ(nf_tag(64.0), "nf64");
    const auto dir = scratch("detail");
    const auto files = emit_detail_cdfs(sweep_result(), (dir / "sweep.csv").string());
    ASSERT_EQ(files.size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "sweep_latency_cdf_nf2.csv"));
    EXPECT_TRUE(fs::exists(dir / "sweep_nn_cdf_nf2.csv"));
}

TEST(FormatDouble, RoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02e23, -0.0, 123456789.123456789}) {
        EXPECT_EQ(parse_double(format_double(v)), v);
    }
    EXPECT_TRUE(std::isnan(parse_double(format_double(std::nan("")))));
    EXPECT_THROW(parse_double("1.5x"), IoError);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    const std::string fluid = config_path("fluid_nf64.json");
    EXPECT_EQ(cli("analytic --config " + fluid), 0);
    EXPECT_EQ(cli("analytic --config " + fluid + " --json"), 0);
    EXPECT_EQ(cli("analytic --config /nonexistent.json"), 3);
    EXPECT_EQ(cli("analytic"), 1);
    EXPECT_EQ(cli("no_such_command"), 1);
    EXPECT_EQ(cli("toy --rho 0.5,2,9"), 0);
    EXPECT_EQ(cli("toy --rho -1"), 1);
    EXPECT_EQ(cli("toy --mode sideways"), 1);
    EXPECT_EQ(cli("capacity --config " + fluid + " --theta 100 --k 1e5"), 0);
    EXPECT_EQ(cli("capacity --config " + fluid + " --theta 0 --k 1e5"), 1);
    EXPECT_EQ(cli("ode --config " + fluid + " --grid 16 --tmax 200 --out " + (dir / "f.csv").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "f.csv"));
    EXPECT_EQ(cli("ode --config " + fluid + " --grid 8"), 1);
    EXPECT_EQ(cli("ode --config " + fluid + " --grid 16 --tmax 10 --out /nonexistent/dir/f.csv"), 3);

    std::ofstream(dir / "bad.json") << R"({"rate": {"kind": "tcp", "R": 0.1}, "arrivals": {"lambda": 1}})";
    EXPECT_EQ(cli("analytic --config " + (dir / "bad.json").string()), 1);
    std::ofstream(dir / "broken.json") << "{";
    EXPECT_EQ(cli("simulate --config " + (dir / "broken.json").string() + " --out-dir " + dir.string()), 1);

    std::ofstream(dir / "capped.json") << R"({"rate": {"kind": "tcp", "R": 0.1},
        "scenario": {"N_f": 1, "W_f": 100}, "sim": {"population_cap": 2, "target_departures": 50}})";
    EXPECT_EQ(cli("simulate --config " + (dir / "capped.json").string() + " --out-dir " + (dir / "cap").string()), 2);

    std::ofstream(dir / "small.json") << R"({"rate": {"kind": "tcp", "R": 0.1},
        "scenario": {"N_f": 1, "W_f": 100}, "sim": {"target_departures": 200, "seed": 4}})";
    const auto run_dir = dir / "run";
    EXPECT_EQ(cli("simulate --config " + (dir / "small.json").string() + " --out-dir " + run_dir.string()), 0);
    for (const char* f : {"run_summary.json", "latency_cdf.csv", "nn_cdf.csv", "density_trace.csv"}) {
        EXPECT_TRUE(fs::exists(run_dir / f)) << f;
    }
    std::ifstream summary(run_dir / "run_summary.json");
    const auto j = json::parse(summary);
    EXPECT_TRUE(j.at("conserved").get<bool>());
    EXPECT_EQ(j.at("seed").get<int>(), 4);

    const auto out = (dir / "sw.csv").string();
    EXPECT_EQ(cli("sweep --nf 1 --runs 2 --target-departures 100 --detail 1 --threads 2 --out " + out), 0);
    const auto rows = read_csv(out);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].seeds_used, "1;2");
    EXPECT_TRUE(fs::exists(dir / "sw.json"));
    EXPECT_TRUE(fs::exists(dir / "sw_latency_cdf_nf1.csv"));
    EXPECT_EQ(cli("sweep --nf 1 --kind snr_range --out " + out), 1);
    EXPECT_EQ(cli("sweep --nf 1 --runs 0 --out " + out), 1);
    EXPECT_EQ(cli("sweep --nf 1 --runs 1 --target-departures 50 --out /nonexistent/dir/x.csv"), 3);
}
