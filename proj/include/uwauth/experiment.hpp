#pragma once

// Seeded Monte-Carlo experiment: independent runs of the protocol, threshold
// training on one half of the runs, scoring on the other, and the CSV
// outputs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <boost/version.hpp>
#include <json.hpp>

#include "uwauth/analysis.hpp"
#include "uwauth/auth.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/config.hpp"
#include "uwauth/csv.hpp"

namespace uwauth {

inline constexpr const char* version = "1.0.0";

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

/// One row of trace.csv.
struct PacketRow {
    int run = 0;
    Split split = Split::test;
    std::uint64_t packet_id = 0;
    Source true_source = Source::legitimate;
    bool scored = false;
    double psi = 0.0;
    Verdict verdict = Verdict::authentic;
    std::vector<std::optional<double>> r_values;  // per trusted node; empty when it abstained
};

struct Tally {
    std::size_t scored = 0;
    std::size_t correct = 0;
    std::size_t false_alarms = 0;       // authentic packets declared fake
    std::size_t missed_detections = 0;  // attacker packets declared authentic

    double accuracy() const { return scored ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0; }

    void add(bool authentic, Verdict v) {
        ++scored;
        const bool said_authentic = v == Verdict::authentic;
        if (said_authentic == authentic) ++correct;
        else if (authentic) ++false_alarms;
        else ++missed_detections;
    }

    Tally& operator+=(const Tally& o) {
        scored += o.scored;
        correct += o.correct;
        false_alarms += o.false_alarms;
        missed_detections += o.missed_detections;
        return *this;
    }
};

struct RunSummary {
    int run = 0;
    Split split = Split::test;
    Tally tally;
};

struct HistogramBin {
    bool authentic = true;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct RunReport {
    ExperimentConfig config;
    double detection_threshold = 0.0;
    double lambda = 0.0;
    std::optional<double> training_accuracy;
    std::vector<PacketRow> trace;
    std::vector<RunSummary> runs;  // included runs, by run index
    Tally test;                    // aggregate over scored test packets
    std::size_t excluded_runs = 0;
    std::vector<std::string> errors;  // one line per excluded run
    std::optional<RocCurve> roc;      // test scores, both classes present
    std::optional<BoundCurve> bound;  // divergence averaged over included runs
    std::vector<HistogramBin> histogram;
    int num_trusted = 0;
};

inline constexpr int histogram_bins = 20;

/// FA grid of the bound curve: 0.05, 0.10, ..., 1.
inline std::vector<double> bound_fa_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 20; ++k) g.push_back(k / 20.0);
    return g;
}

/// Divergence between the attacker's and the legitimate per-packet
/// observations: T times the per-symbol KL of the three drawn channel
/// quantities, summed over trusted nodes.
inline double packet_divergence(const Scenario& sc, const AttackPlan& plan, int symbols) {
    double sum = 0.0;
    for (std::size_t n = 0; n < sc.num_trusted(); ++n) {
        const auto& l = sc.legitimate_links[n];
        const auto& a = plan.links[n];
        sum += kl_gg_numeric(a.num_taps, l.num_taps) + kl_gg_numeric(a.delay_spread, l.delay_spread) +
               kl_gg_numeric(a.power, l.power);
    }
    return static_cast<double>(symbols) * sum;
}

/// Packet order of one run: the first packet is legitimate; the attacker
/// packets are either spread uniformly over the remaining slots or last.
inline std::vector<Source> make_schedule(const ScheduleConfig& s, std::uint64_t seed) {
    const int total = s.legitimate_packets + s.attacker_packets;
    std::vector<Source> out(static_cast<std::size_t>(total), Source::legitimate);
    if (s.placement == AttackerPlacement::last) {
        for (int i = s.legitimate_packets; i < total; ++i) out[static_cast<std::size_t>(i)] = Source::attacker;
        return out;
    }
    std::vector<std::size_t> slots;
    for (int i = 1; i < total; ++i) slots.push_back(static_cast<std::size_t>(i));
    Rng rng(seed);
    for (int k = 0; k < s.attacker_packets; ++k) {
        const auto j = static_cast<std::size_t>(k) + rng.index(slots.size() - static_cast<std::size_t>(k));
        std::swap(slots[static_cast<std::size_t>(k)], slots[j]);
        out[slots[static_cast<std::size_t>(k)]] = Source::attacker;
    }
    return out;
}

/// Packets scored in a run: every attacker packet and as many legitimate
/// packets (excluding the first, trusted one), drawn at random.
inline std::vector<bool> choose_scored(std::span<const Source> schedule, std::uint64_t seed) {
    std::vector<bool> scored(schedule.size(), false);
    std::vector<std::size_t> legit;
    std::size_t attackers = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (schedule[i] == Source::attacker) {
            scored[i] = true;
            ++attackers;
        } else if (i > 0) {
            legit.push_back(i);
        }
    }
    Rng rng(seed);
    const std::size_t take = std::min(attackers, legit.size());
    for (std::size_t k = 0; k < take; ++k) {
        const auto j = k + rng.index(legit.size() - k);
        std::swap(legit[k], legit[j]);
        scored[legit[k]] = true;
    }
    return scored;
}

inline Split split_of(const ExperimentConfig& c, int run) {
    if (c.decision.mode == ThresholdMode::fixed) return Split::test;
    return run % 2 == 0 ? Split::train : Split::test;
}

/// Everything one run produces before the threshold is known.
struct RunResult {
    int run = 0;
    bool ok = false;
    std::string error;
    std::vector<PacketOutcome> outcomes;
    std::vector<bool> scored;
    double divergence = 0.0;
};

inline std::uint64_t run_seed(std::uint64_t master, int run) {
    return derive_seed(master, {1, static_cast<std::uint64_t>(run)});
}

/// Simulates one run. Module errors are caught and reported in the result.
inline RunResult simulate_run(const ExperimentConfig& c, int run, double threshold,
                              const std::function<void(const PacketTransmission&)>& on_packet = {}) {
    RunResult out;
    out.run = run;
    const auto seed = run_seed(c.master_seed, run);
    try {
        const auto sc = build_scenario(c.scenario, derive_seed(seed, {10}), threshold);
        const auto plan = plan_attack(sc, c.attacker, derive_seed(seed, {11}));
        const auto schedule = make_schedule(c.schedule, derive_seed(seed, {3}));
        ProtocolConfig pc;
        pc.symbols = c.schedule.symbols;
        pc.packet_gap = c.schedule.packet_gap;
        pc.node = c.node;
        pc.fusion = c.fusion;
        out.outcomes = run_protocol(sc, schedule, plan, 0.0, derive_seed(seed, {12}), pc, on_packet);
        out.scored = choose_scored(schedule, derive_seed(seed, {13}));
        out.divergence = packet_divergence(sc, plan, c.schedule.symbols);
        out.ok = true;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        out.error = e.what();
    }
    return out;
}

/// Per-class min-max normalization onto [-1, 1] followed by equal-width
/// bins. A class without scores has no bins.
inline std::vector<HistogramBin> normalized_histogram(std::span<const Score> scores, int bins = histogram_bins) {
    std::vector<HistogramBin> out;
    for (bool authentic : {true, false}) {
        std::vector<double> v;
        for (const auto& s : scores)
            if (s.authentic == authentic) v.push_back(s.psi);
        if (v.empty()) continue;
        std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
        {
            const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
            for (double x : v) {
                const double z = *mx > *mn ? 2.0 * (x - *mn) / (*mx - *mn) - 1.0 : 0.0;
                auto b = static_cast<int>(std::floor((z + 1.0) / 2.0 * bins));
                counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
            }
        }
        for (int b = 0; b < bins; ++b) {
            out.push_back({authentic, -1.0 + 2.0 * b / bins, -1.0 + 2.0 * (b + 1) / bins,
                           counts[static_cast<std::size_t>(b)]});
        }
    }
    return out;
}

/// Detection threshold for an experiment, calibrated once from the master seed.
inline double experiment_threshold(const ExperimentConfig& c) {
    return calibrate_threshold(c.scenario.noise_floor, c.scenario.false_alarm, c.scenario.calibration_samples,
                               derive_seed(c.master_seed, {0}));
}

/// Runs every simulation (in parallel when configured), selects the
/// threshold from the training runs only and scores the test runs.
inline RunReport run_experiment(const ExperimentConfig& config,
                                const std::function<void(const std::string&)>& log = {}) {
    validate(config);
    RunReport rep;
    rep.config = config;
    rep.num_trusted = config.scenario.num_trusted;
    rep.detection_threshold = experiment_threshold(config);

    std::vector<RunResult> results(static_cast<std::size_t>(config.runs));
    {
        std::atomic<int> next{0};
        std::vector<std::exception_ptr> fatal(static_cast<std::size_t>(config.runs));
        auto worker = [&] {
            for (int r = next++; r < config.runs; r = next++) {
                try {
                    results[static_cast<std::size_t>(r)] = simulate_run(config, r, rep.detection_threshold);
                } catch (...) {
                    fatal[static_cast<std::size_t>(r)] = std::current_exception();
                }
            }
        };
        const int threads = std::min(config.threads, config.runs);
        if (threads <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        for (const auto& e : fatal)
            if (e) std::rethrow_exception(e);
    }

    // Threshold from the training runs, before any test packet is looked at.
    std::vector<Score> train;
    for (const auto& res : results) {
        if (!res.ok) continue;
        if (split_of(config, res.run) != Split::train) continue;
        for (std::size_t i = 0; i < res.outcomes.size(); ++i)
            if (res.scored[i]) train.push_back({res.outcomes[i].psi, res.outcomes[i].true_source == Source::legitimate});
    }
    switch (config.decision.mode) {
        case ThresholdMode::fixed:
            rep.lambda = config.decision.lambda;
            break;
        case ThresholdMode::trained: {
            const auto t = select_threshold_trained(train);
            rep.lambda = t.lambda;
            rep.training_accuracy = t.training_accuracy;
            break;
        }
        case ThresholdMode::knee: {
            const auto curve = roc_from_scores(train);
            rep.lambda = select_threshold_knee(curve, config.decision.target_fa, config.decision.target_tp);
            rep.training_accuracy = accuracy_at(train, rep.lambda);
            break;
        }
    }

    std::vector<Score> test;
    double divergence = 0.0;
    std::size_t included = 0;
    for (const auto& res : results) {
        if (!res.ok) {
            ++rep.excluded_runs;
            const auto line = "run " + std::to_string(res.run) + " excluded: " + res.error;
            rep.errors.push_back(line);
            if (log) log(line);
            continue;
        }
        ++included;
        divergence += res.divergence;
        RunSummary sum{res.run, split_of(config, res.run), {}};
        for (std::size_t i = 0; i < res.outcomes.size(); ++i) {
            const auto& o = res.outcomes[i];
            PacketRow row;
            row.run = res.run;
            row.split = sum.split;
            row.packet_id = o.packet_id;
            row.true_source = o.true_source;
            row.scored = res.scored[i];
            row.psi = o.psi;
            row.verdict = decide(o.psi, rep.lambda);
            for (const auto& b : o.beliefs) row.r_values.push_back(b ? std::optional<double>(b->r_value) : std::nullopt);
            if (row.scored) {
                sum.tally.add(o.true_source == Source::legitimate, row.verdict);
                if (row.split == Split::test) test.push_back({o.psi, o.true_source == Source::legitimate});
            }
            rep.trace.push_back(std::move(row));
        }
        if (sum.split == Split::test) rep.test += sum.tally;
        rep.runs.push_back(sum);
    }

    const bool both = std::any_of(test.begin(), test.end(), [](const Score& s) { return s.authentic; }) &&
                      std::any_of(test.begin(), test.end(), [](const Score& s) { return !s.authentic; });
    if (both) rep.roc = roc_from_scores(test);
    if (included > 0) rep.bound = fa_md_bound(divergence / static_cast<double>(included), bound_fa_grid());
    rep.histogram = normalized_histogram(test);
    return rep;
}

// ---------------------------------------------------------------- outputs

inline void write_trace_csv(std::ostream& os, const RunReport& rep) {
    os << "run,split,packet_id,true_source,scored,psi,verdict";
    for (int n = 1; n <= rep.num_trusted; ++n) os << ",r_" << n;
    os << '\n';
    for (const auto& row : rep.trace) {
        os << row.run << ',' << to_string(row.split) << ',' << row.packet_id << ',' << to_string(row.true_source) << ','
           << (row.scored ? 1 : 0) << ',' << csv::format_double(row.psi) << ',' << to_string(row.verdict);
        for (const auto& r : row.r_values) {
            os << ',';
            if (r) os << csv::format_double(*r);
        }
        os << '\n';
    }
}

inline void write_roc_csv(std::ostream& os, const std::optional<RocCurve>& roc) {
    os << "lambda,p_fa,p_tp\n";
    if (!roc) return;
    for (const auto& p : roc->points)
        os << csv::format_double(p.lambda) << ',' << csv::format_double(p.p_fa) << ',' << csv::format_double(p.p_tp)
           << '\n';
}

inline void write_bound_csv(std::ostream& os, const std::optional<BoundCurve>& bound) {
    os << "p_fa,p_tp_bound,kl\n";
    if (!bound) return;
    for (const auto& p : bound->points)
        os << csv::format_double(p.p_fa) << ',' << csv::format_double(p.p_tp) << ',' << csv::format_double(bound->kl)
           << '\n';
}

inline void write_histogram_csv(std::ostream& os, std::span<const HistogramBin> bins) {
    os << "class,bin_lo,bin_hi,count\n";
    for (const auto& b : bins)
        os << (b.authentic ? "legitimate" : "attacker") << ',' << csv::format_double(b.lo) << ','
           << csv::format_double(b.hi) << ',' << b.count << '\n';
}

inline void write_summary_csv(std::ostream& os, const RunReport& rep) {
    os << "scope,run,split,scored,correct,false_alarms,missed_detections,accuracy,lambda\n";
    auto line = [&](const std::string& scope, const std::string& run, const std::string& split, const Tally& t) {
        os << scope << ',' << run << ',' << split << ',' << t.scored << ',' << t.correct << ',' << t.false_alarms << ','
           << t.missed_detections << ',' << csv::format_double(t.accuracy()) << ','
           << csv::format_double(rep.lambda) << '\n';
    };
    for (const auto& r : rep.runs) line("run", std::to_string(r.run), to_string(r.split), r.tally);
    if (!rep.runs.empty()) line("aggregate", "", "test", rep.test);
}

inline std::string compiler_version() {
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " __VERSION__;
#else
    return "unknown";
#endif
}

inline void write_meta(std::ostream& os, const RunReport& rep) {
    os << "uwauth " << version << '\n';
    os << "compiler " << compiler_version() << '\n';
    os << "boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.' << BOOST_VERSION % 100 << '\n';
    os << "nlohmann_json " << NLOHMANN_JSON_VERSION_MAJOR << '.' << NLOHMANN_JSON_VERSION_MINOR << '.'
       << NLOHMANN_JSON_VERSION_PATCH << '\n';
    os << "master_seed " << rep.config.master_seed << '\n';
    os << "runs " << rep.config.runs << '\n';
    os << "excluded_runs " << rep.excluded_runs << '\n';
    for (const auto& e : rep.errors) os << "error " << e << '\n';
    os << "detection_threshold " << csv::format_double(rep.detection_threshold) << '\n';
    os << "lambda " << csv::format_double(rep.lambda) << '\n';
    if (rep.training_accuracy) os << "training_accuracy " << csv::format_double(*rep.training_accuracy) << '\n';
    os << "test_accuracy " << csv::format_double(rep.test.accuracy()) << '\n';
    os << "config\n" << to_json(rep.config).dump(2) << '\n';
}

inline void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    body(out);
    out.flush();
    if (!out) throw Error("write failed: " + path.string());
}

/// Writes trace.csv, roc.csv, bound.csv, histogram.csv, summary.csv and meta.txt.
inline void emit_outputs(const RunReport& rep, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
    write_file(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, rep); });
    write_file(dir / "roc.csv", [&](std::ostream& os) { write_roc_csv(os, rep.roc); });
    write_file(dir / "bound.csv", [&](std::ostream& os) { write_bound_csv(os, rep.bound); });
    write_file(dir / "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, rep.histogram); });
    write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, rep); });
    write_file(dir / "meta.txt", [&](std::ostream& os) { write_meta(os, rep); });
}

}  // namespace uwauth
