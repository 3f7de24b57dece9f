#pragma once

// Tap detection, the six per-symbol channel features, and the temporal /
// spatial statistics used to choose among them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwauth/errors.hpp"
#include "uwauth/pdp.hpp"

namespace uwauth {

enum class Feature : int {
    num_taps = 1,
    avg_tap_power = 2,
    coherence_time = 3,
    rms_delay_spread = 4,
    avg_path_delay = 5,
    smoothed_power = 6,
};

inline const char* feature_name(Feature f) {
    switch (f) {
        case Feature::num_taps: return "num_taps";
        case Feature::avg_tap_power: return "avg_tap_power";
        case Feature::coherence_time: return "coherence_time";
        case Feature::rms_delay_spread: return "rms_delay_spread";
        case Feature::avg_path_delay: return "avg_path_delay";
        case Feature::smoothed_power: return "smoothed_power";
    }
    return "?";
}

inline Feature feature_from_id(int id) {
    if (id < 1 || id > 6) throw ConfigError("feature ids are 1..6, got " + std::to_string(id), "features.set");
    return static_cast<Feature>(id);
}

struct TapSet {
    std::vector<double> delays;
    std::vector<double> magnitudes;
    double tau0 = 0.0;

    std::size_t size() const { return delays.size(); }
    bool empty() const { return delays.empty(); }
};

/// Taps with magnitude strictly above the threshold; nullopt when none is.
inline std::optional<TapSet> detect_taps(const PowerDelayProfile& pdp, double threshold) {
    if (!(threshold > 0.0)) throw ParameterDomainError("detection threshold must be positive");
    TapSet s;
    for (const auto& t : pdp.taps) {
        if (t.magnitude > threshold) {
            s.delays.push_back(t.delay);
            s.magnitudes.push_back(t.magnitude);
        }
    }
    if (s.empty()) return std::nullopt;
    s.tau0 = *std::min_element(s.delays.begin(), s.delays.end());
    return s;
}

inline int num_taps(const TapSet& s) { return static_cast<int>(s.size()); }

inline std::optional<double> avg_tap_power(const TapSet& s) {
    if (s.empty()) return std::nullopt;
    double sum = 0.0;
    for (double m : s.magnitudes) sum += m;
    return sum / static_cast<double>(s.size());
}

inline std::optional<double> rms_delay_spread(const TapSet& s) {
    if (s.size() < 2) return std::nullopt;
    double sum = 0.0;
    for (double d : s.delays) {
        if (d == s.tau0) continue;
        sum += (d - s.tau0) * (d - s.tau0);
    }
    return std::sqrt(sum / static_cast<double>(s.size() - 1));
}

inline std::optional<double> avg_path_delay(const TapSet& s) {
    if (s.size() < 2) return std::nullopt;
    double sum = 0.0;
    for (double d : s.delays) {
        if (d == s.tau0) continue;
        sum += d - s.tau0;
    }
    return sum / static_cast<double>(s.size() - 1);
}

/// Total detected power of one symbol.
inline double received_power(const TapSet& s) {
    double sum = 0.0;
    for (double m : s.magnitudes) sum += m;
    return sum;
}

inline double smoothed_power(double q, std::optional<double> previous, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterDomainError("alpha must be in [0, 1]");
    if (!previous) return q;
    return alpha * q + (1.0 - alpha) * *previous;
}

namespace detail {

/// Profile binned onto the 100 us delay grid.
inline std::map<long long, double> bin_profile(const PowerDelayProfile& p) {
    std::map<long long, double> out;
    for (const auto& t : p.taps) out[std::llround(t.delay / min_tap_separation)] += t.magnitude;
    return out;
}

inline double cosine(const std::map<long long, double>& a, const std::map<long long, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [k, v] : a) {
        na += v * v;
        if (auto it = b.find(k); it != b.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : b) nb += v * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

}  // namespace detail

/// Largest lag (a multiple of the profile spacing) up to which the mean
/// normalized correlation between H(t) and H(t - lag) stays above
/// `level`. Profiles are assumed to be on a uniform time grid.
inline std::optional<double> coherence_time(std::span<const PowerDelayProfile> profiles, double level = 0.9) {
    if (profiles.size() < 2) return std::nullopt;
    std::vector<std::map<long long, double>> binned;
    binned.reserve(profiles.size());
    for (const auto& p : profiles) binned.push_back(detail::bin_profile(p));
    const double dt = (profiles.back().symbol_time - profiles.front().symbol_time) /
                      static_cast<double>(profiles.size() - 1);
    std::size_t best = 0;
    for (std::size_t lag = 1; lag < profiles.size(); ++lag) {
        double sum = 0.0;
        for (std::size_t t = lag; t < profiles.size(); ++t) sum += detail::cosine(binned[t], binned[t - lag]);
        if (sum / static_cast<double>(profiles.size() - lag) > level) {
            best = lag;
        } else {
            break;
        }
    }
    return static_cast<double>(best) * dt;
}

inline std::optional<double> jain_index(std::span<const double> series) {
    if (series.empty()) return std::nullopt;
    double s = 0.0, s2 = 0.0;
    for (double x : series) {
        s += x;
        s2 += x * x;
    }
    if (s2 == 0.0) return std::nullopt;
    return s * s / (static_cast<double>(series.size()) * s2);
}

/// Mean over unordered receiver pairs of the normalized correlation of the
/// two series times (1 - Jain) of each.
inline std::optional<double> spatial_metric(std::span<const std::vector<double>> series) {
    if (series.size() < 2) return std::nullopt;
    const auto len = series.front().size();
    if (len < 2) throw ParameterDomainError("spatial metric needs series of length >= 2");
    std::vector<double> energy, jain;
    for (const auto& s : series) {
        if (s.size() != len) throw ParameterDomainError("spatial metric needs equal-length series");
        double e = 0.0;
        for (double x : s) e += x * x;
        if (e == 0.0) return std::nullopt;
        energy.push_back(e);
        jain.push_back(*jain_index(s));
    }
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        for (std::size_t j = i + 1; j < series.size(); ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) dot += series[i][t] * series[j][t];
            total += dot / std::sqrt(energy[i] * energy[j]) * (1.0 - jain[i]) * (1.0 - jain[j]);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

struct FeatureSample {
    double time = 0.0;
    double value = 0.0;
};

/// Per-packet feature samples, keyed by feature.
using PacketFeatures = std::map<Feature, std::vector<FeatureSample>>;

inline std::vector<double> values_of(const std::vector<FeatureSample>& s) {
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& x : s) out.push_back(x.value);
    return out;
}

/// Turns the profiles a node receives into feature samples. Holds the
/// smoothed-power recursion state, which carries over from packet to packet.
class FeatureExtractor {
public:
    FeatureExtractor(double threshold, double alpha) : threshold_(threshold), alpha_(alpha) {
        if (!(threshold > 0.0)) throw ParameterDomainError("detection threshold must be positive");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterDomainError("alpha must be in [0, 1]");
    }

    /// All six features for one packet. Symbols without detected taps are
    /// skipped; features undefined for a symbol (e.g. delay spread with a
    /// single tap) are left out for that symbol only. The coherence time
    /// contributes one sample per packet.
    PacketFeatures extract(std::span<const PowerDelayProfile> profiles, bool with_coherence = true) {
        PacketFeatures out;
        for (const auto& pdp : profiles) {
            const auto taps = detect_taps(pdp, threshold_);
            if (!taps) continue;
            const double t = pdp.symbol_time;
            out[Feature::num_taps].push_back({t, static_cast<double>(num_taps(*taps))});
            out[Feature::avg_tap_power].push_back({t, *avg_tap_power(*taps)});
            if (auto v = rms_delay_spread(*taps)) out[Feature::rms_delay_spread].push_back({t, *v});
            if (auto v = avg_path_delay(*taps)) out[Feature::avg_path_delay].push_back({t, *v});
            smoothed_ = smoothed_power(received_power(*taps), smoothing_state(), alpha_);
            has_smoothed_ = true;
            out[Feature::smoothed_power].push_back({t, smoothed_});
        }
        if (with_coherence) {
            if (auto c = coherence_time(profiles)) {
                out[Feature::coherence_time].push_back({profiles.front().symbol_time, *c});
            }
        }
        return out;
    }

    std::optional<double> smoothing_state() const {
        return has_smoothed_ ? std::optional<double>(smoothed_) : std::nullopt;
    }

private:
    double threshold_;
    double alpha_;
    double smoothed_ = 0.0;
    bool has_smoothed_ = false;
};

}  // namespace uwauth
