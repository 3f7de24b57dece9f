#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uwauth/uwauth.hpp"

namespace fs = std::filesystem;
using namespace uwauth;

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct ExperimentArgs {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::optional<int> threads;
};

void add_experiment_options(CLI::App* cmd, ExperimentArgs& a) {
    cmd->add_option("--config", a.config, "experiment configuration (JSON)")->required();
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_option("--seed", a.seed, "override master_seed");
    cmd->add_option("--runs", a.runs, "override runs");
    cmd->add_option("--threads", a.threads, "override threads");
}

ExperimentConfig load_with_overrides(const ExperimentArgs& a) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open " + a.config, "--config");
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "(document)");
    }
    // Overrides are applied to the document so that required keys may come
    // from the command line.
    if (j.is_object()) {
        if (a.seed) j["master_seed"] = *a.seed;
        if (a.runs) j["runs"] = *a.runs;
        if (a.threads) j["threads"] = *a.threads;
    }
    return parse_config(j);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

int cmd_simulate(const ExperimentArgs& a, const std::string& export_pdp) {
    const auto cfg = load_with_overrides(a);
    const auto rep = run_experiment(cfg, log_line);
    emit_outputs(rep, a.out);
    if (!export_pdp.empty()) {
        std::vector<PdpRecord> records;
        const auto trusted_ids = [&] {
            const auto sc = build_scenario(cfg.scenario, derive_seed(run_seed(cfg.master_seed, 0), {10}),
                                           rep.detection_threshold);
            std::vector<int> ids;
            for (const auto& n : sc.topology.trusted()) ids.push_back(n.id);
            return ids;
        }();
        const auto res = simulate_run(cfg, 0, rep.detection_threshold, [&](const PacketTransmission& tx) {
            for (std::size_t n = 0; n < tx.profiles.size(); ++n)
                for (const auto& p : tx.profiles[n]) records.push_back({trusted_ids[n], tx.packet_id, p});
        });
        if (!res.ok) throw Error("run 0 failed: " + res.error);
        write_file(export_pdp, [&](std::ostream& os) { write_pdp_csv(os, records); });
    }
    std::cout << "test accuracy " << csv::format_double(rep.test.accuracy()) << " over " << rep.test.scored
              << " scored packets; lambda " << csv::format_double(rep.lambda) << "; excluded runs "
              << rep.excluded_runs << '\n';
    return 0;
}

int cmd_roc(const ExperimentArgs& a) {
    auto cfg = load_with_overrides(a);
    // Every run contributes to the sweep.
    cfg.decision.mode = ThresholdMode::fixed;
    const auto rep = run_experiment(cfg, log_line);
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "roc.csv", [&](std::ostream& os) { write_roc_csv(os, rep.roc); });
    write_file(fs::path(a.out) / "bound.csv", [&](std::ostream& os) { write_bound_csv(os, rep.bound); });
    std::cout << "roc points " << (rep.roc ? rep.roc->points.size() : 0) << "; divergence "
              << (rep.bound ? csv::format_double(rep.bound->kl) : std::string("n/a")) << '\n';
    return 0;
}

int cmd_em_bench(const EmBenchConfig& c, const std::string& out) {
    const auto rep = run_em_bench(c);
    fs::create_directories(out);
    write_file(fs::path(out) / "em_bench.csv", [&](std::ostream& os) {
        os << "case,seed,mu0,sigma0,beta0,k0,mu1,sigma1,beta1,k1,est_mu0,est_sigma0,est_beta0,est_k0,est_mu1,"
              "est_sigma1,est_beta1,est_k1,max_relative_error,posterior_accuracy,iterations,monotone,recovered,error\n";
        for (std::size_t i = 0; i < rep.cases.size(); ++i) {
            const auto& k = rep.cases[i];
            os << i << ',' << k.seed;
            for (const auto* m : {&k.truth, &k.estimate})
                for (const auto& h : *m)
                    os << ',' << csv::format_double(h.omega.mu) << ',' << csv::format_double(h.omega.sigma) << ','
                       << csv::format_double(h.omega.beta) << ',' << csv::format_double(h.k);
            os << ',' << csv::format_double(k.max_relative_error) << ',' << csv::format_double(k.posterior_accuracy)
               << ',' << k.iterations << ',' << k.monotone << ',' << k.recovered << ',' << k.error << '\n';
        }
    });
    std::cout << "recovered " << rep.recovered << '/' << rep.cases.size() << "; median iterations "
              << csv::format_double(rep.median_iterations) << "; monotone " << (rep.all_monotone ? "yes" : "no")
              << '\n';
    return 0;
}

struct FeaturesArgs {
    std::string pdp;
    std::string out = "out";
    std::optional<double> threshold;
    double false_alarm = 1e-4;
    std::uint64_t calibration_samples = 1'000'000;
    std::uint64_t seed = 1;
    double alpha = 0.5;
};

int cmd_features(const FeaturesArgs& a) {
    const auto nodes = ingest_pdp_csv(a.pdp);
    fs::create_directories(a.out);
    std::map<double, double> thresholds;
    // series[feature][node] in time order
    std::map<Feature, std::map<int, std::vector<double>>> series;
    write_file(fs::path(a.out) / "features.csv", [&](std::ostream& os) {
        os << "node_id,packet_id,feature_id,feature,time_s,value\n";
        for (const auto& [node, packets] : nodes) {
            if (packets.empty() || packets.front().profiles.empty()) continue;
            const double floor = packets.front().profiles.front().noise_floor;
            double thr = 0.0;
            if (a.threshold) {
                thr = *a.threshold;
            } else {
                auto it = thresholds.find(floor);
                if (it == thresholds.end())
                    it = thresholds.emplace(floor, calibrate_threshold(floor, a.false_alarm, a.calibration_samples,
                                                                       a.seed)).first;
                thr = it->second;
            }
            FeatureExtractor fx(thr, a.alpha);
            for (const auto& p : packets) {
                for (const auto& [f, samples] : fx.extract(p.profiles)) {
                    for (const auto& s : samples) {
                        os << node << ',' << p.packet_id << ',' << static_cast<int>(f) << ',' << feature_name(f) << ','
                           << csv::format_double(s.time) << ',' << csv::format_double(s.value) << '\n';
                        series[f][node].push_back(s.value);
                    }
                }
            }
        }
    });
    write_file(fs::path(a.out) / "spatial.csv", [&](std::ostream& os) {
        os << "feature_id,feature,statistic,node_id,value\n";
        for (const auto& [f, per_node] : series) {
            std::size_t len = std::numeric_limits<std::size_t>::max();
            std::vector<std::vector<double>> aligned;
            for (const auto& [node, v] : per_node) {
                const auto j = jain_index(v);
                os << static_cast<int>(f) << ',' << feature_name(f) << ",jain," << node << ','
                   << (j ? csv::format_double(*j) : std::string()) << '\n';
                len = std::min(len, v.size());
            }
            for (const auto& [node, v] : per_node) aligned.emplace_back(v.begin(), v.begin() + static_cast<long>(len));
            std::optional<double> rho;
            if (aligned.size() >= 2 && len >= 2) rho = spatial_metric(aligned);
            os << static_cast<int>(f) << ',' << feature_name(f) << ",rho_c,," << (rho ? csv::format_double(*rho) : "")
               << '\n';
        }
    });
    std::cout << "nodes " << nodes.size() << "; features written to " << a.out << '\n';
    return 0;
}

GGParams read_gg(const nlohmann::json& j, const std::string& key) {
    if (!j.is_object()) throw ConfigError("expected {mu, sigma, beta}", key);
    for (const auto& [k, v] : j.items()) {
        if (k != "mu" && k != "sigma" && k != "beta") throw ConfigError("unknown key", key + "." + k);
        if (!v.is_number()) throw ConfigError("expected a number", key + "." + k);
    }
    for (const char* k : {"mu", "sigma", "beta"})
        if (!j.contains(k)) throw ConfigError("missing required key", key + "." + k);
    GGParams p{j["mu"].get<double>(), j["sigma"].get<double>(), j["beta"].get<double>()};
    if (!is_valid(p)) throw ConfigError("invalid GG parameters", key);
    return p;
}

int cmd_bound(const std::string& pairs_path, const std::string& out) {
    std::ifstream in(pairs_path);
    if (!in) throw ConfigError("cannot open " + pairs_path, "--pairs");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "(document)");
    }
    if (!j.is_object()) throw ConfigError("expected an object", "(root)");
    for (const auto& [k, v] : j.items())
        if (k != "samples_per_packet" && k != "pairs" && k != "fa_grid") throw ConfigError("unknown key", k);
    if (!j.contains("pairs") || !j["pairs"].is_array() || j["pairs"].empty())
        throw ConfigError("expected a non-empty list", "pairs");
    std::size_t samples = 1;
    if (j.contains("samples_per_packet")) {
        if (!j["samples_per_packet"].is_number_unsigned() || j["samples_per_packet"].get<std::size_t>() == 0)
            throw ConfigError("expected a positive integer", "samples_per_packet");
        samples = j["samples_per_packet"].get<std::size_t>();
    }
    std::vector<double> grid = bound_fa_grid();
    if (j.contains("fa_grid")) {
        grid.clear();
        for (const auto& v : j["fa_grid"]) {
            if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0)
                throw ConfigError("expected numbers in [0, 1]", "fa_grid");
            grid.push_back(v.get<double>());
        }
    }
    std::vector<LawPair> pairs;
    for (std::size_t i = 0; i < j["pairs"].size(); ++i) {
        const auto& p = j["pairs"][i];
        const std::string key = "pairs[" + std::to_string(i) + "]";
        if (!p.is_object() || !p.contains("h0") || !p.contains("h1"))
            throw ConfigError("expected {h0, h1}", key);
        for (const auto& [k, v] : p.items())
            if (k != "h0" && k != "h1") throw ConfigError("unknown key", key + "." + k);
        pairs.emplace_back(read_gg(p["h0"], key + ".h0"), read_gg(p["h1"], key + ".h1"));
    }

    fs::create_directories(out);
    write_file(fs::path(out) / "kl.csv", [&](std::ostream& os) {
        os << "pair,mu0,sigma0,beta0,mu1,sigma1,beta1,kl_numeric,kl_gaussian_closed,kl_equal_mean_closed,"
              "kl_equal_mean_printed\n";
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& [a, b] = pairs[i];
            os << i << ',' << csv::format_double(a.mu) << ',' << csv::format_double(a.sigma) << ','
               << csv::format_double(a.beta) << ',' << csv::format_double(b.mu) << ',' << csv::format_double(b.sigma)
               << ',' << csv::format_double(b.beta) << ',' << csv::format_double(kl_gg_numeric(a, b)) << ',';
            if (a.beta == 2.0 && b.beta == 2.0) os << csv::format_double(kl_gaussian_closed(a, b));
            os << ',';
            if (a.mu == b.mu) os << csv::format_double(kl_equal_mean_closed(a, b));
            os << ',';
            if (a.mu == b.mu) os << csv::format_double(kl_equal_mean_printed(a, b));
            os << '\n';
        }
    });
    const double kl = total_divergence(pairs, samples);
    write_file(fs::path(out) / "bound.csv", [&](std::ostream& os) { write_bound_csv(os, fa_md_bound(kl, grid)); });
    std::cout << "total divergence " << csv::format_double(kl) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative channel-feature authentication simulator"};
    app.require_subcommand(1);

    ExperimentArgs sim_args, roc_args;
    std::string export_pdp;
    auto* sim = app.add_subcommand("simulate", "run the full pipeline and write the CSV outputs");
    add_experiment_options(sim, sim_args);
    sim->add_option("--export-pdp", export_pdp, "also write the profiles of run 0 to this CSV");

    auto* roc = app.add_subcommand("roc", "sweep the threshold over all runs and write the ROC and bound");
    add_experiment_options(roc, roc_args);

    EmBenchConfig bench;
    std::string bench_out = "out";
    auto* em = app.add_subcommand("em-bench", "mixture recovery benchmark");
    em->add_option("--cases", bench.cases, "number of seeded mixtures")->check(CLI::PositiveNumber);
    em->add_option("--packets", bench.packets, "packets per mixture")->check(CLI::Range(2, 100000));
    em->add_option("--samples", bench.samples, "samples per packet")->check(CLI::Range(1, 100000));
    em->add_option("--seed", bench.seed, "master seed");
    em->add_option("--out", bench_out, "output directory");

    FeaturesArgs fa;
    auto* feat = app.add_subcommand("features", "extract features and spatial statistics from a PDP CSV");
    feat->add_option("--pdp", fa.pdp, "power-delay profile CSV")->required();
    feat->add_option("--out", fa.out, "output directory");
    feat->add_option("--threshold", fa.threshold, "detection threshold (calibrated from the noise floor if absent)");
    feat->add_option("--false-alarm", fa.false_alarm, "per-tap false-alarm rate for calibration");
    feat->add_option("--calibration-samples", fa.calibration_samples, "noise samples for calibration");
    feat->add_option("--seed", fa.seed, "calibration seed");
    feat->add_option("--alpha", fa.alpha, "smoothing factor of the received power")->check(CLI::Range(0.0, 1.0));

    std::string pairs_path, bound_out = "out";
    auto* bnd = app.add_subcommand("bound", "divergences and FA/MD bound for given parameter pairs");
    bnd->add_option("--pairs", pairs_path, "JSON file with GG parameter pairs")->required();
    bnd->add_option("--out", bound_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (*sim) return cmd_simulate(sim_args, export_pdp);
        if (*roc) return cmd_roc(roc_args);
        if (*em) return cmd_em_bench(bench, bench_out);
        if (*feat) return cmd_features(fa);
        if (*bnd) return cmd_bound(pairs_path, bound_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_runtime;
    }
    return 0;
}
