#pragma once

// Empirical down-conversion source model: pair rate and Bell parameter as
// linear functions of pump power, emission-ring diameter vs crystal
// temperature, and the division of the ring into diametric section pairs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ringqkd/common.hpp"

namespace ringqkd {

/// Source characterisation at one crystal temperature. pair_rate_slope is the
/// whole-ring pair rate per mW of pump; s_slope the Bell-parameter
/// degradation per mW, anchored at (p_ref_mw, s_ref).
struct TempProfile {
    std::string name;
    double temperature_c = 0.0;
    double ring_diameter_mm = 0.0;
    double pair_rate_slope_mhz_per_mw = 0.0;
    double s_slope_per_mw = 0.0;
    double s_ref = kTsirelson;
    double p_ref_mw = 1.0;

    void validate() const {
        if (ring_diameter_mm <= 0.0) throw config_error("profile: ring diameter must be > 0");
        if (pair_rate_slope_mhz_per_mw < 0.0 || s_slope_per_mw < 0.0)
            throw config_error("profile: slopes must be >= 0");
        if (!(s_ref > 2.0 && s_ref <= kTsirelson + 1e-12))
            throw config_error("profile: s_ref must be in (2, 2 sqrt(2)]");
        if (p_ref_mw <= 0.0) throw config_error("profile: p_ref must be > 0");
    }
};

inline TempProfile profile_t39_7() {
    return {"T39.7", 39.7, 4.95, 0.056, 0.085, 2.63, 1.0};
}

inline TempProfile profile_t37_7() {
    return {"T37.7", 37.7, 6.55, 0.041, 0.068, 2.61, 2.1};
}

inline TempProfile profile_by_name(const std::string& name) {
    if (name == "T39.7") return profile_t39_7();
    if (name == "T37.7") return profile_t37_7();
    throw config_error("unknown source profile \"" + name + "\" (built-ins: T39.7, T37.7)");
}

/// One angular section of the emission ring. Sections come in diametric
/// pairs: partner arcs are offset by exactly 180 degrees and carry the two
/// photons of each pair.
struct Section {
    int index = 0;
    std::string label;
    double arc_start_deg = 0.0;
    double arc_span_deg = 0.0;
    double coupling_efficiency = 0.1;
    double singles_rate = 0.0;  // fitted detected singles, 0 when not fit from data
};

struct SectionLayout {
    int k_sources = 0;
    std::vector<Section> sections;  // size 2K, order 1..K then 1'..K'

    int partner(int i) const { return (i + k_sources) % (2 * k_sources); }

    void validate() const {
        if (k_sources < 1) throw config_error("layout: need at least one source");
        if (static_cast<int>(sections.size()) != 2 * k_sources)
            throw config_error("layout: expected " + std::to_string(2 * k_sources) +
                               " sections, got " + std::to_string(sections.size()));
        for (const auto& s : sections) {
            if (!(s.coupling_efficiency > 0.0 && s.coupling_efficiency <= 1.0))
                throw config_error("layout: coupling efficiency of section " + s.label +
                                   " must be in (0, 1]");
            if (s.singles_rate < 0.0)
                throw config_error("layout: singles rate of section " + s.label +
                                   " must be >= 0");
        }
        for (int i = 0; i < 2 * k_sources; ++i) {
            const auto& a = sections[i];
            const auto& b = sections[partner(i)];
            const double offset = std::fmod(b.arc_start_deg - a.arc_start_deg + 720.0, 360.0);
            if (std::abs(offset - 180.0) > 1e-9)
                throw config_error("layout: sections " + a.label + " and " + b.label +
                                   " are not diametric");
        }
    }
};

/// Divide the ring into 2K equal sections labelled 1..K and 1'..K'.
/// partner(i) = (i + K) mod 2K. Efficiencies default to 0.10.
inline SectionLayout make_sections(int k_sources,
                                   std::optional<std::vector<double>> efficiencies = {}) {
    if (k_sources < 1) throw config_error("make_sections: K must be >= 1");
    if (efficiencies && static_cast<int>(efficiencies->size()) != 2 * k_sources)
        throw config_error("make_sections: expected " + std::to_string(2 * k_sources) +
                           " efficiencies, got " + std::to_string(efficiencies->size()));
    SectionLayout layout;
    layout.k_sources = k_sources;
    const double span = 180.0 / k_sources;
    for (int i = 0; i < 2 * k_sources; ++i) {
        Section s;
        s.index = i;
        const int pair = i % k_sources;
        s.label = std::to_string(pair + 1) + (i < k_sources ? "" : "'");
        s.arc_start_deg = i < k_sources ? pair * span : 180.0 + pair * span;
        s.arc_span_deg = span;
        s.coupling_efficiency = efficiencies ? (*efficiencies)[i] : 0.1;
        layout.sections.push_back(s);
    }
    layout.validate();
    return layout;
}

struct SourceParams {
    double pump_mw = 1.0;
    TempProfile profile;
    SectionLayout layout;

    void validate() const {
        if (pump_mw < 0.0) throw config_error("source: pump power must be >= 0");
        profile.validate();
        layout.validate();
    }
};

/// Whole-ring pair emission rate at the given pump power.
inline double ring_pair_rate(const TempProfile& profile, double pump_mw) {
    return profile.pair_rate_slope_mhz_per_mw * 1e6 * pump_mw;
}

/// Pair rate of one diametric source: the ring rate split evenly over K.
inline double pair_rate(const SourceParams& p) {
    p.validate();
    return ring_pair_rate(p.profile, p.pump_mw) / p.layout.k_sources;
}

/// S(P) = s_ref + s_slope (p_ref - P), clamped to [0, 2 sqrt(2)].
inline double bell_s_vs_power(const SourceParams& p) {
    p.validate();
    const double s = p.profile.s_ref + p.profile.s_slope_per_mw * (p.profile.p_ref_mw - p.pump_mw);
    return std::clamp(s, 0.0, kTsirelson);
}

/// Ring diameter in mm, linear through the two characterised temperatures
/// (39.7 C, 4.95 mm) and (37.7 C, 6.55 mm). Valid for T in [37.0, 40.5].
inline double ring_diameter(double temperature_c) {
    if (temperature_c < 37.0 || temperature_c > 40.5)
        throw std::domain_error("ring_diameter: temperature outside the modelled range [37.0, 40.5]");
    constexpr double slope = (6.55 - 4.95) / (37.7 - 39.7);  // mm per degree C
    return 4.95 + slope * (temperature_c - 39.7);
}

/// Detected singles of one section: photon flux through its arc times its
/// coupling efficiency. Each photon of a pair lands in one of the two
/// diametric arcs, so a section sees 2 R_ring * arc_fraction photons.
inline double section_singles_rate(const SectionLayout& layout, const SourceParams& p,
                                   int section_index) {
    if (section_index < 0 || section_index >= static_cast<int>(layout.sections.size()))
        throw std::out_of_range("section_singles_rate: section index out of range");
    const auto& s = layout.sections[section_index];
    const double arc_fraction = s.arc_span_deg / 360.0;
    return 2.0 * ring_pair_rate(p.profile, p.pump_mw) * arc_fraction * s.coupling_efficiency;
}

}  // namespace ringqkd
