#pragma once

// Run configuration: a single JSON document that names the topology, source
// fit or profile, detector parameters, state model, simulation settings and
// output paths. The loader validates everything up front so downstream code
// never sees a half-formed model. Also owns the topology JSON schema.

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ringqkd/analysis.hpp"
#include "ringqkd/common.hpp"
#include "ringqkd/sim.hpp"
#include "ringqkd/source.hpp"
#include "ringqkd/topology.hpp"

namespace ringqkd {

using json = nlohmann::json;

namespace detail {

inline const json& require_field(const json& j, const std::string& key,
                                 const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) throw config_error(where + ": missing required field \"" + key + "\"");
    return *it;
}

inline double number_in(const json& j, const std::string& key, const std::string& where,
                        double lo, double hi, std::optional<double> fallback = {}) {
    const auto it = j.find(key);
    if (it == j.end()) {
        if (fallback) return *fallback;
        throw config_error(where + ": missing required field \"" + key + "\"");
    }
    if (!it->is_number())
        throw config_error(where + "." + key + ": expected a number");
    const double v = it->get<double>();
    if (v < lo || v > hi)
        throw config_error(where + "." + key + ": " + std::to_string(v) +
                           " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

}  // namespace detail

struct OutputConfig {
    std::string dir = "out";
    std::string tag_format = "bin";  // "csv" | "bin"
};

struct ScheduleConfig {
    ScheduleMode mode = ScheduleMode::SplitHvDa;
    double slot_ms = 1.0;       // random mode
    std::string link;           // chsh / tomography modes
};

struct StateModelConfig {
    double visibility = 1.0;
    double damping = 0.0;
    std::map<std::string, double> per_link_visibility;
    std::optional<std::pair<double, double>> visibility_range;
};

/// Parsed and validated run configuration.
struct RunConfig {
    Scheme scheme = Scheme::PaperN6;
    int n_users = 6;
    double splitter_t = 0.5;

    bool sources_fitted = true;
    std::vector<double> pair_rates;   // fit mode, size K
    std::vector<double> couplings;    // size 2K (defaulted when absent)
    TempProfile profile;              // profile mode
    double pump_mw = 1.0;

    std::vector<User> user_overrides;  // empty = library defaults
    StateModelConfig state;
    std::optional<ParityTable> parity_table;

    double duration_s = 1.0;
    std::optional<std::uint64_t> seed;
    std::int64_t window_ps = 2000;
    ScheduleConfig schedule;
    SiftedConvention sifted_convention = SiftedConvention::MatchedTotal;
    OutputConfig output;

    json raw;  // canonical parsed document, hashed into manifests

    std::string config_hash() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a64(raw.dump())));
        return buf;
    }
};

inline BellKind bell_kind_from_string(const std::string& s, const std::string& where) {
    if (s == "phi+" || s == "phi_plus") return BellKind::PhiPlus;
    if (s == "phi-" || s == "phi_minus") return BellKind::PhiMinus;
    throw config_error(where + ": unknown Bell kind \"" + s + "\" (use phi+ or phi-)");
}

inline TempProfile profile_from_json(const json& j, const std::string& where) {
    if (j.is_string()) return profile_by_name(j.get<std::string>());
    if (!j.is_object()) throw config_error(where + ": expected a profile name or object");
    TempProfile p;
    p.name = j.value("name", "custom");
    p.temperature_c = detail::number_in(j, "temperature_c", where, -50.0, 300.0);
    p.ring_diameter_mm = detail::number_in(j, "ring_diameter_mm", where, 1e-6, 1e3);
    p.pair_rate_slope_mhz_per_mw =
        detail::number_in(j, "pair_rate_slope_mhz_per_mw", where, 0.0, 1e6);
    p.s_slope_per_mw = detail::number_in(j, "s_slope_per_mw", where, 0.0, 10.0);
    p.s_ref = detail::number_in(j, "s_ref", where, 2.0 + 1e-9, kTsirelson);
    p.p_ref_mw = detail::number_in(j, "p_ref_mw", where, 1e-9, 1e6);
    p.validate();
    return p;
}

inline RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw config_error("config: top level must be an object");
    RunConfig cfg;
    cfg.raw = doc;

    // topology
    const auto& topo = detail::require_field(doc, "topology", "config");
    const std::string scheme = detail::require_field(topo, "scheme", "topology")
                                   .get<std::string>();
    if (scheme == "paper_n6") {
        cfg.scheme = Scheme::PaperN6;
        cfg.n_users = 6;
    } else if (scheme == "cyclic" || scheme == "complete") {
        cfg.scheme = scheme == "cyclic" ? Scheme::Cyclic : Scheme::Complete;
        const auto& n = detail::require_field(topo, "n_users", "topology");
        if (!n.is_number_integer())
            throw config_error("topology.n_users: expected an integer");
        cfg.n_users = n.get<int>();
        if (cfg.n_users % 2 != 0) throw config_error("topology.n_users: N must be even");
        if (cfg.n_users < 4) throw config_error("topology.n_users: N must be >= 4");
    } else {
        throw config_error("topology.scheme: unknown scheme \"" + scheme +
                           "\" (paper_n6 | cyclic | complete)");
    }
    cfg.splitter_t = detail::number_in(topo, "splitter_t", "topology", 1e-6, 1.0 - 1e-6, 0.5);

    const int k = cfg.scheme == Scheme::Complete
                      ? (cfg.n_users / 2) * (cfg.n_users / 2 - 1) / 2
                      : cfg.n_users / 2;

    // sources
    const auto& src = detail::require_field(doc, "sources", "config");
    const std::string mode = detail::require_field(src, "mode", "sources").get<std::string>();
    if (const auto it = src.find("couplings"); it != src.end()) {
        if (!it->is_array() || static_cast<int>(it->size()) != 2 * k)
            throw config_error("sources.couplings: expected an array of " +
                               std::to_string(2 * k) + " entries");
        for (const auto& c : *it) {
            if (!c.is_number() || !(c.get<double>() > 0.0 && c.get<double>() <= 1.0))
                throw config_error("sources.couplings: entries must be in (0, 1]");
            cfg.couplings.push_back(c.get<double>());
        }
    }
    if (mode == "fit") {
        cfg.sources_fitted = true;
        const auto& rates = detail::require_field(src, "pair_rates", "sources");
        if (!rates.is_array() || static_cast<int>(rates.size()) != k)
            throw config_error("sources.pair_rates: expected an array of " +
                               std::to_string(k) + " entries");
        for (const auto& r : rates) {
            if (!r.is_number() || r.get<double>() < 0.0)
                throw config_error("sources.pair_rates: entries must be >= 0");
            cfg.pair_rates.push_back(r.get<double>());
        }
        if (cfg.couplings.empty())
            throw config_error("sources: fit mode requires couplings");
    } else if (mode == "profile") {
        cfg.sources_fitted = false;
        cfg.profile = profile_from_json(detail::require_field(src, "profile", "sources"),
                                        "sources.profile");
        cfg.pump_mw = detail::number_in(src, "pump_mw", "sources", 0.0, 1e6);
    } else {
        throw config_error("sources.mode: unknown mode \"" + mode + "\" (fit | profile)");
    }

    // users
    if (const auto it = doc.find("users"); it != doc.end()) {
        if (!it->is_array() || static_cast<int>(it->size()) != cfg.n_users)
            throw config_error("users: expected an array of " + std::to_string(cfg.n_users) +
                               " entries");
        int id = 0;
        for (const auto& uj : *it) {
            User u;
            u.id = id++;
            u.name = detail::require_field(uj, "name", "users").get<std::string>();
            u.detector.efficiency =
                detail::number_in(uj, "efficiency", "users." + u.name, 1e-9, 1.0, 1.0);
            u.detector.dark_rate =
                detail::number_in(uj, "dark_rate", "users." + u.name, 0.0, 1e12, 0.0);
            u.detector.jitter_sigma_ps =
                detail::number_in(uj, "jitter_sigma_ps", "users." + u.name, 0.0, 1e9, 0.0);
            if (const auto r = uj.find("path_reflections"); r != uj.end()) {
                if (!r->is_number_integer() || r->get<int>() < 0)
                    throw config_error("users." + u.name +
                                       ".path_reflections: expected a non-negative integer");
                u.path_reflections = r->get<int>();
            }
            cfg.user_overrides.push_back(u);
        }
    }

    // state model
    if (const auto it = doc.find("state_model"); it != doc.end()) {
        const std::string type = it->value("type", "werner");
        if (type != "werner" && type != "phase_damped")
            throw config_error("state_model.type: unknown type \"" + type + "\"");
        cfg.state.visibility =
            detail::number_in(*it, "visibility", "state_model", 0.0, 1.0, 1.0);
        cfg.state.damping =
            type == "werner" ? 0.0
                             : detail::number_in(*it, "damping", "state_model", 0.0, 1.0, 0.0);
        if (const auto pl = it->find("per_link_visibility"); pl != it->end()) {
            if (!pl->is_object())
                throw config_error("state_model.per_link_visibility: expected an object");
            for (const auto& [name, v] : pl->items()) {
                if (!v.is_number() || !(v.get<double>() >= 0.0 && v.get<double>() <= 1.0))
                    throw config_error("state_model.per_link_visibility." + name +
                                       ": expected a number in [0, 1]");
                cfg.state.per_link_visibility[name] = v.get<double>();
            }
        }
        if (const auto vr = it->find("visibility_range"); vr != it->end()) {
            if (!vr->is_array() || vr->size() != 2)
                throw config_error("state_model.visibility_range: expected [lo, hi]");
            const double lo = (*vr)[0].get<double>(), hi = (*vr)[1].get<double>();
            if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi))
                throw config_error("state_model.visibility_range: need 0 <= lo <= hi <= 1");
            cfg.state.visibility_range = {lo, hi};
        }
    }

    // parity table
    if (const auto it = doc.find("parity_table"); it != doc.end()) {
        if (!it->is_object()) throw config_error("parity_table: expected an object");
        ParityTable table;
        for (const auto& [name, v] : it->items())
            table[name] = bell_kind_from_string(v.get<std::string>(), "parity_table." + name);
        cfg.parity_table = std::move(table);
    }

    // sim
    if (const auto it = doc.find("sim"); it != doc.end()) {
        cfg.duration_s = detail::number_in(*it, "duration_s", "sim", 1e-9, 1e6, 1.0);
        cfg.window_ps = static_cast<std::int64_t>(
            detail::number_in(*it, "window_ps", "sim", 1.0, 1e9, 2000.0));
        if (const auto s = it->find("seed"); s != it->end()) {
            if (!s->is_number_unsigned())
                throw config_error("sim.seed: expected an unsigned integer");
            cfg.seed = s->get<std::uint64_t>();
        }
        if (const auto sc = it->find("schedule"); sc != it->end()) {
            const std::string m = sc->value("mode", "split_hv_da");
            if (m == "split_hv_da")
                cfg.schedule.mode = ScheduleMode::SplitHvDa;
            else if (m == "random")
                cfg.schedule.mode = ScheduleMode::Random;
            else if (m == "chsh")
                cfg.schedule.mode = ScheduleMode::Chsh;
            else if (m == "tomography")
                cfg.schedule.mode = ScheduleMode::Tomography;
            else
                throw config_error("sim.schedule.mode: unknown mode \"" + m + "\"");
            cfg.schedule.slot_ms =
                detail::number_in(*sc, "slot_ms", "sim.schedule", 1e-6, 1e6, 1.0);
            cfg.schedule.link = sc->value("link", "");
            if ((cfg.schedule.mode == ScheduleMode::Chsh ||
                 cfg.schedule.mode == ScheduleMode::Tomography) &&
                cfg.schedule.link.empty())
                throw config_error("sim.schedule: chsh/tomography modes need a \"link\"");
        }
        const std::string conv = it->value("sifted_convention", "matched_total");
        if (conv == "matched_total")
            cfg.sifted_convention = SiftedConvention::MatchedTotal;
        else if (conv == "random_half")
            cfg.sifted_convention = SiftedConvention::RandomHalf;
        else
            throw config_error("sim.sifted_convention: unknown value \"" + conv + "\"");
    }

    // output
    if (const auto it = doc.find("output"); it != doc.end()) {
        cfg.output.dir = it->value("dir", "out");
        cfg.output.tag_format = it->value("tag_format", "bin");
        if (cfg.output.tag_format != "bin" && cfg.output.tag_format != "csv")
            throw config_error("output.tag_format: expected \"bin\" or \"csv\"");
    }

    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file \"" + path + "\"");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw config_error("config parse error in \"" + path + "\": " + e.what());
    }
    return parse_config(doc);
}

/// Instantiate topology, per-source rates and per-link states from a config.
inline NetworkModel build_network_model(const RunConfig& cfg) {
    BuildOptions opts;
    opts.splitter_t = cfg.splitter_t;
    if (!cfg.couplings.empty()) opts.couplings = cfg.couplings;

    NetworkModel model;
    model.topology = build(cfg.n_users, cfg.scheme, opts);

    if (!cfg.user_overrides.empty()) {
        for (int i = 0; i < model.topology.n_users(); ++i) {
            auto& u = model.topology.users[i];
            const auto& o = cfg.user_overrides[i];
            if (o.name != u.name)
                throw config_error("users[" + std::to_string(i) + "]: name \"" + o.name +
                                   "\" does not match topology user \"" + u.name + "\"");
            u.detector = o.detector;
            u.path_reflections = o.path_reflections;
        }
    }
    if (cfg.parity_table) model.topology.parity_table = cfg.parity_table;
    // Reassign once detector overrides and tables are in place.
    refresh_parities(model.topology);

    const int k = model.topology.n_sources();
    if (cfg.sources_fitted) {
        model.source_pair_rate = cfg.pair_rates;
    } else {
        SourceParams params{cfg.pump_mw, cfg.profile, model.topology.layout};
        model.source_pair_rate.assign(k, pair_rate(params));
    }

    std::mt19937_64 draw_rng(cfg.seed.value_or(0) ^ 0x9e3779b97f4a7c15ULL);
    for (const auto& l : model.topology.links) {
        const std::string name = model.topology.link_name(l);
        double v = cfg.state.visibility;
        if (cfg.state.visibility_range) {
            std::uniform_real_distribution<double> d(cfg.state.visibility_range->first,
                                                     cfg.state.visibility_range->second);
            v = d(draw_rng);
        }
        if (const auto it = cfg.state.per_link_visibility.find(name);
            it != cfg.state.per_link_visibility.end())
            v = it->second;
        model.link_states[{l.user_a, l.user_b}] = {v, cfg.state.damping};
    }

    for (const auto& [name, v] : cfg.state.per_link_visibility)
        model.topology.link_by_name(name);  // reject unknown link names

    return model;
}

inline BasisSchedule make_schedule(const RunConfig& cfg, const Topology& topo) {
    const std::int64_t duration_ps = std::llround(cfg.duration_s * 1e12);
    switch (cfg.schedule.mode) {
        case ScheduleMode::SplitHvDa:
            return make_split_schedule(topo.n_users(), duration_ps);
        case ScheduleMode::Random:
            return make_random_schedule(topo.n_users(), duration_ps,
                                        std::llround(cfg.schedule.slot_ms * 1e9),
                                        cfg.seed.value_or(0));
        case ScheduleMode::Chsh:
            return make_chsh_schedule(topo, duration_ps, topo.link_by_name(cfg.schedule.link));
        case ScheduleMode::Tomography:
            return make_tomography_schedule(topo, duration_ps,
                                            topo.link_by_name(cfg.schedule.link));
    }
    throw internal_error("make_schedule: unhandled mode");
}

// ---------------------------------------------------------------------------
// Topology JSON

inline json topology_to_json(const Topology& topo) {
    json j;
    j["scheme"] = to_string(topo.scheme);
    j["k_sources"] = topo.layout.k_sources;
    j["sections"] = json::array();
    for (const auto& s : topo.layout.sections)
        j["sections"].push_back({{"label", s.label},
                                 {"arc_start_deg", s.arc_start_deg},
                                 {"arc_span_deg", s.arc_span_deg},
                                 {"coupling_efficiency", s.coupling_efficiency}});
    j["users"] = json::array();
    for (const auto& u : topo.users) {
        json uj{{"name", u.name},
                {"efficiency", u.detector.efficiency},
                {"dark_rate", u.detector.dark_rate},
                {"jitter_sigma_ps", u.detector.jitter_sigma_ps},
                {"channels", {topo.channel(u.id, 0), topo.channel(u.id, 1)}}};
        if (u.path_reflections >= 0) uj["path_reflections"] = u.path_reflections;
        j["users"].push_back(uj);
    }
    j["splitters"] = json::array();
    for (const auto& sp : topo.splitters) {
        json sj{{"id", sp.id},
                {"transmit_ratio", sp.transmit_ratio},
                {"outputs",
                 {topo.users[sp.output_users[0]].name, topo.users[sp.output_users[1]].name}}};
        sj["inputs"] = json::array();
        for (const auto& in : sp.inputs)
            sj["inputs"].push_back({{"section", topo.layout.sections[in.section].label},
                                    {"weight", in.weight}});
        j["splitters"].push_back(sj);
    }
    j["links"] = json::array();
    for (const auto& l : topo.links)
        j["links"].push_back({{"name", topo.link_name(l)},
                              {"a", topo.users[l.user_a].name},
                              {"b", topo.users[l.user_b].name},
                              {"source", source_label(l.source)},
                              {"bell", to_string(l.bell)},
                              {"route_prob_a", l.route_prob_a},
                              {"route_prob_b", l.route_prob_b}});
    return j;
}

inline Topology topology_from_json(const json& j) {
    Topology topo;
    const std::string scheme = detail::require_field(j, "scheme", "topology").get<std::string>();
    if (scheme == "paper_n6")
        topo.scheme = Scheme::PaperN6;
    else if (scheme == "cyclic")
        topo.scheme = Scheme::Cyclic;
    else if (scheme == "complete")
        topo.scheme = Scheme::Complete;
    else
        throw config_error("topology.scheme: unknown scheme \"" + scheme + "\"");

    const int k = detail::require_field(j, "k_sources", "topology").get<int>();
    topo.layout.k_sources = k;
    std::map<std::string, int> section_index;
    int idx = 0;
    for (const auto& sj : detail::require_field(j, "sections", "topology")) {
        Section s;
        s.index = idx;
        s.label = detail::require_field(sj, "label", "section").get<std::string>();
        s.arc_start_deg = sj.value("arc_start_deg", 0.0);
        s.arc_span_deg = sj.value("arc_span_deg", 0.0);
        s.coupling_efficiency = sj.value("coupling_efficiency", 0.1);
        section_index[s.label] = idx++;
        topo.layout.sections.push_back(s);
    }
    int uid = 0;
    for (const auto& uj : detail::require_field(j, "users", "topology")) {
        User u;
        u.id = uid++;
        u.name = detail::require_field(uj, "name", "user").get<std::string>();
        u.detector.efficiency = uj.value("efficiency", 1.0);
        u.detector.dark_rate = uj.value("dark_rate", 0.0);
        u.detector.jitter_sigma_ps = uj.value("jitter_sigma_ps", 0.0);
        u.path_reflections = uj.value("path_reflections", -1);
        topo.users.push_back(u);
    }
    for (const auto& sj : detail::require_field(j, "splitters", "topology")) {
        BeamSplitter sp;
        sp.id = detail::require_field(sj, "id", "splitter").get<int>();
        sp.transmit_ratio = sj.value("transmit_ratio", 0.5);
        const auto& outs = detail::require_field(sj, "outputs", "splitter");
        sp.output_users = {topo.user_by_name(outs[0].get<std::string>()).id,
                           topo.user_by_name(outs[1].get<std::string>()).id};
        for (const auto& in : detail::require_field(sj, "inputs", "splitter")) {
            const std::string label =
                detail::require_field(in, "section", "splitter.input").get<std::string>();
            const auto it = section_index.find(label);
            if (it == section_index.end())
                throw config_error("splitter input references unknown section \"" + label +
                                   "\"");
            sp.inputs.push_back({it->second, in.value("weight", 1.0)});
        }
        for (int out : sp.output_users) topo.users[out].splitter = sp.id;
        topo.splitters.push_back(sp);
    }
    if (const auto it = j.find("links"); it != j.end()) {
        ParityTable table;
        for (const auto& lj : *it)
            table[detail::require_field(lj, "name", "link").get<std::string>()] =
                bell_kind_from_string(
                    detail::require_field(lj, "bell", "link").get<std::string>(), "link.bell");
        topo.parity_table = std::move(table);
    }
    topo.links = link_graph(topo);
    refresh_parities(topo);
    return topo;
}

}  // namespace ringqkd
