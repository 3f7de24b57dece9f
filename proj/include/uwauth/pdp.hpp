#pragma once

// Power-delay profiles and their CSV interchange format:
//   node_id,packet_id,symbol_time_s,tap_delay_s,tap_magnitude,noise_floor
// One row per tap; rows of one (node, packet, symbol) are contiguous and
// sorted by delay.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "uwauth/csv.hpp"
#include "uwauth/errors.hpp"

namespace uwauth {

/// Arrivals closer than this are merged by the 10 kHz receive filter.
inline constexpr double min_tap_separation = 100e-6;
inline constexpr double separation_slack = 1e-12;

struct Tap {
    double delay = 0.0;      // seconds
    double magnitude = 0.0;  // linear power

    friend bool operator==(const Tap&, const Tap&) = default;
};

struct PowerDelayProfile {
    double symbol_time = 0.0;
    std::vector<Tap> taps;
    double noise_floor = 0.0;

    friend bool operator==(const PowerDelayProfile&, const PowerDelayProfile&) = default;
};

/// Empty string when valid, otherwise the violated invariant.
inline std::string check_profile(const PowerDelayProfile& p) {
    if (!std::isfinite(p.symbol_time)) return "non-finite symbol time";
    if (!(p.noise_floor >= 0.0) || !std::isfinite(p.noise_floor)) return "negative or non-finite noise floor";
    for (std::size_t i = 0; i < p.taps.size(); ++i) {
        const auto& t = p.taps[i];
        if (!(t.delay >= 0.0) || !std::isfinite(t.delay)) return "negative or non-finite tap delay";
        if (!(t.magnitude >= 0.0) || !std::isfinite(t.magnitude)) return "negative or non-finite tap magnitude";
        if (i > 0) {
            const double gap = t.delay - p.taps[i - 1].delay;
            if (gap <= 0.0) return "tap delays not strictly increasing";
            if (gap < min_tap_separation - separation_slack) return "taps closer than 100 us";
        }
    }
    return {};
}

inline void validate(const PowerDelayProfile& p) {
    if (auto msg = check_profile(p); !msg.empty()) throw ParameterDomainError("power-delay profile: " + msg);
}

struct PdpRecord {
    int node_id = 0;
    std::uint64_t packet_id = 0;
    PowerDelayProfile profile;
};

struct PacketProfiles {
    std::uint64_t packet_id = 0;
    std::vector<PowerDelayProfile> profiles;  // ordered by symbol time
};

using NodeProfiles = std::map<int, std::vector<PacketProfiles>>;

inline constexpr const char* pdp_csv_header = "node_id,packet_id,symbol_time_s,tap_delay_s,tap_magnitude,noise_floor";

inline void write_pdp_csv(std::ostream& os, std::span<const PdpRecord> records, bool header = true) {
    using csv::format_double;
    if (header) os << pdp_csv_header << '\n';
    for (const auto& r : records) {
        for (const auto& t : r.profile.taps) {
            os << r.node_id << ',' << r.packet_id << ',' << format_double(r.profile.symbol_time) << ','
               << format_double(t.delay) << ',' << format_double(t.magnitude) << ','
               << format_double(r.profile.noise_floor) << '\n';
        }
    }
}

/// Parses the PDP CSV format. Profiles come back grouped per node and packet,
/// ordered by (node, packet, symbol time).
inline NodeProfiles parse_pdp_csv(std::istream& is) {
    static const std::vector<std::string> columns{"node_id",       "packet_id",     "symbol_time_s",
                                                  "tap_delay_s",   "tap_magnitude", "noise_floor"};
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw ParseError(0, "missing header");
    ++lineno;
    {
        auto fields = csv::split(csv::trim(line));
        if (!fields.empty() && fields[0].substr(0, 3) == "\xEF\xBB\xBF") fields[0].remove_prefix(3);
        if (fields.size() != columns.size()) throw ParseError(lineno, "expected 6 header columns");
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (csv::trim(fields[i]) != columns[i]) throw ParseError(lineno, "missing column " + columns[i]);
        }
    }

    using Key = std::tuple<int, std::uint64_t, double>;
    std::map<Key, std::pair<PowerDelayProfile, std::size_t>> profiles;
    bool have_current = false;
    Key current{};
    while (std::getline(is, line)) {
        ++lineno;
        const auto text = csv::trim(line);
        if (text.empty()) continue;
        const auto f = csv::split(text);
        if (f.size() != columns.size()) throw ParseError(lineno, "expected 6 fields, got " + std::to_string(f.size()));
        int node = 0;
        std::uint64_t packet = 0;
        double t = 0, delay = 0, mag = 0, noise = 0;
        if (!csv::parse_int(f[0], node)) throw ParseError(lineno, "bad node_id");
        if (!csv::parse_int(f[1], packet)) throw ParseError(lineno, "bad packet_id");
        if (!csv::parse(f[2], t) || !std::isfinite(t)) throw ParseError(lineno, "bad symbol_time_s");
        if (!csv::parse(f[3], delay) || !(delay >= 0.0) || !std::isfinite(delay))
            throw ParseError(lineno, "bad tap_delay_s");
        if (!csv::parse(f[4], mag) || !(mag >= 0.0) || !std::isfinite(mag))
            throw ParseError(lineno, "bad tap_magnitude");
        if (!csv::parse(f[5], noise) || !(noise >= 0.0) || !std::isfinite(noise))
            throw ParseError(lineno, "bad noise_floor");

        const Key key{node, packet, t};
        auto it = profiles.find(key);
        if (it == profiles.end()) {
            it = profiles.emplace(key, std::make_pair(PowerDelayProfile{t, {}, noise}, lineno)).first;
        } else if (!have_current || key != current) {
            throw ParseError(lineno, "rows of one (node, packet, symbol) are not contiguous");
        }
        auto& prof = it->second.first;
        if (prof.noise_floor != noise) throw ParseError(lineno, "noise_floor changes within one profile");
        if (!prof.taps.empty()) {
            const double gap = delay - prof.taps.back().delay;
            if (gap <= 0.0) throw ParseError(lineno, "tap delays not increasing");
            if (gap < min_tap_separation - separation_slack) throw ParseError(lineno, "taps closer than 100 us");
        }
        prof.taps.push_back({delay, mag});
        current = key;
        have_current = true;
    }

    NodeProfiles out;
    for (auto& [key, value] : profiles) {
        auto& packets = out[std::get<0>(key)];
        if (packets.empty() || packets.back().packet_id != std::get<1>(key)) {
            packets.push_back({std::get<1>(key), {}});
        }
        packets.back().profiles.push_back(std::move(value.first));
    }
    return out;
}

inline NodeProfiles ingest_pdp_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return parse_pdp_csv(in);
}

}  // namespace uwauth
