#pragma once

// Network wiring: ring sections -> beam splitters / combiners -> users, the
// derived link graph, Bell-state parity per link, and the N-scaling schemes.

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ringqkd/common.hpp"
#include "ringqkd/qstate.hpp"
#include "ringqkd/source.hpp"

namespace ringqkd {

enum class Scheme { PaperN6, Cyclic, Complete };

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::PaperN6: return "paper_n6";
        case Scheme::Cyclic: return "cyclic";
        case Scheme::Complete: return "complete";
    }
    return "?";
}

struct DetectorParams {
    double efficiency = 1.0;
    double dark_rate = 0.0;       // per user, split over the two PBS ports
    double jitter_sigma_ps = 0.0;
};

struct User {
    int id = 0;
    std::string name;
    DetectorParams detector;
    int path_reflections = -1;  // mirror count on this user's channel, -1 = unknown
    int splitter = -1;
};

struct SplitterInput {
    int section = -1;     // index into the layout
    double weight = 1.0;  // transmission into the combining stage (1 for a plain BS)
};

/// Two-output splitter. A plain beam splitter has exactly two unit-weight
/// inputs; the combiner used by the complete scheme carries one weighted
/// input per far-end splitter ahead of the final two-way stage.
struct BeamSplitter {
    int id = 0;
    std::vector<SplitterInput> inputs;
    double transmit_ratio = 0.5;
    std::array<int, 2> output_users{-1, -1};

    /// Probability that a photon on input k leaves through output j.
    double route_probability(int input_idx, int output_idx) const {
        const double t = transmit_ratio;
        if (inputs.size() == 2) {
            const bool straight = (input_idx == 0) == (output_idx == 0);
            return straight ? t : 1.0 - t;
        }
        return inputs[input_idx].weight * (output_idx == 0 ? t : 1.0 - t);
    }
};

/// Entanglement link between two users on different splitters sharing a
/// source. user_a < user_b; route probabilities refer to each user's photon.
struct Link {
    int user_a = -1;
    int user_b = -1;
    int source = -1;
    BellKind bell = BellKind::PhiMinus;
    double route_prob_a = 0.5;
    double route_prob_b = 0.5;
};

using ParityTable = std::map<std::string, BellKind>;

struct Topology {
    Scheme scheme = Scheme::PaperN6;
    SectionLayout layout;
    std::vector<User> users;
    std::vector<BeamSplitter> splitters;
    std::vector<Link> links;
    std::optional<ParityTable> parity_table;

    int n_users() const { return static_cast<int>(users.size()); }
    int n_sources() const { return layout.k_sources; }
    int n_channels() const { return 2 * n_users(); }

    /// Detector channel of a user's PBS port (0 = transmitted, 1 = reflected).
    int channel(int user_id, int port) const { return 2 * user_id + port; }

    const User& user_by_name(const std::string& name) const {
        for (const auto& u : users)
            if (u.name == name) return u;
        throw config_error("unknown user \"" + name + "\"");
    }

    std::string link_name(const Link& l) const {
        return users[l.user_a].name + users[l.user_b].name;
    }

    const Link& link_by_name(const std::string& name) const {
        for (const auto& l : links)
            if (link_name(l) == name) return l;
        throw config_error("no link named \"" + name + "\"");
    }

    /// Splitter and input slot fed by a section, or {-1, -1}.
    std::pair<int, int> section_destination(int section_idx) const {
        for (const auto& sp : splitters)
            for (int k = 0; k < static_cast<int>(sp.inputs.size()); ++k)
                if (sp.inputs[k].section == section_idx) return {sp.id, k};
        return {-1, -1};
    }
};

inline std::string source_label(int source_idx) {
    static const char* roman[] = {"I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X"};
    if (source_idx < 10) return roman[source_idx];
    return "S" + std::to_string(source_idx + 1);
}

/// Reflection parity of a link: even total mirror count preserves the source
/// state (PhiMinus), odd flips it. A supplied parity table wins over counts.
inline BellKind bell_parity(const Topology& topo, const Link& link) {
    if (topo.parity_table) {
        const auto it = topo.parity_table->find(topo.link_name(link));
        if (it != topo.parity_table->end()) return it->second;
    }
    const int ra = topo.users[link.user_a].path_reflections;
    const int rb = topo.users[link.user_b].path_reflections;
    if (ra < 0 || rb < 0)
        throw data_error("bell_parity: unknown parity for link " + topo.link_name(link) +
                         " (no table entry and missing reflection counts)");
    return (ra + rb) % 2 == 0 ? BellKind::PhiMinus : BellKind::PhiPlus;
}

/// One link per user pair that shares a source through two different
/// splitters, with routing probabilities along each photon's path. If several
/// sources serve the same pair (K=2 cyclic), the lowest source id is kept.
inline std::vector<Link> link_graph(const Topology& topo) {
    std::vector<Link> out;
    std::set<std::pair<int, int>> seen;
    const int k = topo.layout.k_sources;
    for (int s = 0; s < k; ++s) {
        const auto [spa, ina] = topo.section_destination(s);
        const auto [spb, inb] = topo.section_destination(s + k);
        if (spa < 0 || spb < 0 || spa == spb) continue;
        const auto& x = topo.splitters[spa];
        const auto& y = topo.splitters[spb];
        for (int ox = 0; ox < 2; ++ox)
            for (int oy = 0; oy < 2; ++oy) {
                int u = x.output_users[ox];
                int v = y.output_users[oy];
                double pu = x.route_probability(ina, ox);
                double pv = y.route_probability(inb, oy);
                if (u > v) {
                    std::swap(u, v);
                    std::swap(pu, pv);
                }
                if (!seen.insert({u, v}).second) continue;
                Link l;
                l.user_a = u;
                l.user_b = v;
                l.source = s;
                l.route_prob_a = pu;
                l.route_prob_b = pv;
                out.push_back(l);
            }
    }
    std::sort(out.begin(), out.end(), [](const Link& a, const Link& b) {
        return std::tie(a.user_a, a.user_b) < std::tie(b.user_a, b.user_b);
    });
    return out;
}

namespace detail {

inline void assign_parities(Topology& topo) {
    for (auto& l : topo.links) {
        try {
            l.bell = bell_parity(topo, l);
        } catch (const data_error&) {
            l.bell = BellKind::PhiMinus;  // source state, no reflection knowledge
        }
    }
}

}  // namespace detail

/// Re-derive every link's Bell kind from the parity table / reflection
/// counts; links with neither keep the unflipped source state.
inline void refresh_parities(Topology& topo) { detail::assign_parities(topo); }

/// Parity partition measured on the six-user network: which links carry the
/// flipped state depends on the mirror counts of the physical layout.
inline ParityTable paper_n6_parity_table() {
    ParityTable t;
    for (const char* name : {"AC", "AF", "BC", "BF", "CE", "DE"}) t[name] = BellKind::PhiPlus;
    for (const char* name : {"AD", "AE", "BD", "BE", "CF", "DF"}) t[name] = BellKind::PhiMinus;
    return t;
}

struct BuildOptions {
    double splitter_t = 0.5;
    DetectorParams detector;
    std::optional<std::vector<double>> couplings;
};

/// The six-user, twelve-link bench network: three diametric sources
/// multiplexed through three 50:50 splitters.
///   BS0: sections (1, 2)   -> users (A, B)
///   BS1: sections (3, 1')  -> users (C, D)
///   BS2: sections (2', 3') -> users (E, F)
inline Topology build_paper_n6(const BuildOptions& opts = {},
                               std::optional<ParityTable> parity = {}) {
    Topology topo;
    topo.scheme = Scheme::PaperN6;
    topo.layout = make_sections(3, opts.couplings);
    for (int i = 0; i < 6; ++i) {
        User u;
        u.id = i;
        u.name = std::string(1, static_cast<char>('A' + i));
        u.detector = opts.detector;
        topo.users.push_back(u);
    }
    const int wiring[3][2] = {{0, 1}, {2, 3}, {4, 5}};  // sections 1,2 | 3,1' | 2',3'
    for (int j = 0; j < 3; ++j) {
        BeamSplitter bs;
        bs.id = j;
        bs.inputs = {{wiring[j][0], 1.0}, {wiring[j][1], 1.0}};
        bs.transmit_ratio = opts.splitter_t;
        bs.output_users = {2 * j, 2 * j + 1};
        topo.users[2 * j].splitter = j;
        topo.users[2 * j + 1].splitter = j;
        topo.splitters.push_back(bs);
    }
    topo.parity_table = parity ? *parity : paper_n6_parity_table();
    topo.links = link_graph(topo);
    detail::assign_parities(topo);
    return topo;
}

/// General even-N builder.
///   cyclic:   K = N/2 sources; splitter j takes the primary section of
///             source j and the secondary of source (j+1) mod K. 2N links
///             (4 for N=4), user degree 4 (2 for N=4).
///   complete: one source per splitter pair, C(K,2) sources feeding
///             (K-1)-input combiners; N(N-2)/2 links, user degree N-2.
inline Topology build(int n_users, Scheme scheme, const BuildOptions& opts = {}) {
    if (scheme == Scheme::PaperN6) return build_paper_n6(opts);
    if (n_users % 2 != 0) throw config_error("build: N must be even");
    if (n_users < 4) throw config_error("build: N must be >= 4");
    const int k = n_users / 2;

    Topology topo;
    topo.scheme = scheme;
    for (int i = 0; i < n_users; ++i) {
        User u;
        u.id = i;
        u.name = i < 26 ? std::string(1, static_cast<char>('A' + i)) : "U" + std::to_string(i);
        u.detector = opts.detector;
        u.splitter = i / 2;
        topo.users.push_back(u);
    }

    if (scheme == Scheme::Cyclic) {
        topo.layout = make_sections(k, opts.couplings);
        for (int j = 0; j < k; ++j) {
            BeamSplitter bs;
            bs.id = j;
            bs.inputs = {{j, 1.0}, {k + (j + 1) % k, 1.0}};
            bs.transmit_ratio = opts.splitter_t;
            bs.output_users = {2 * j, 2 * j + 1};
            topo.splitters.push_back(bs);
        }
    } else {
        const int n_src = k * (k - 1) / 2;
        topo.layout = make_sections(n_src, opts.couplings);
        std::vector<BeamSplitter> combiners(k);
        for (int j = 0; j < k; ++j) {
            combiners[j].id = j;
            combiners[j].transmit_ratio = opts.splitter_t;
            combiners[j].output_users = {2 * j, 2 * j + 1};
        }
        const double w = k > 2 ? 1.0 / (k - 1) : 1.0;
        int s = 0;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j, ++s) {
                combiners[i].inputs.push_back({s, w});
                combiners[j].inputs.push_back({s + n_src, w});
            }
        topo.splitters = std::move(combiners);
    }

    topo.links = link_graph(topo);
    detail::assign_parities(topo);
    return topo;
}

/// Invariant checks; returns human-readable violations, empty when valid.
/// Entries prefixed "warning:" flag degraded-but-usable configurations.
inline std::vector<std::string> validate(const Topology& topo) {
    std::vector<std::string> v;
    const int n_sections = static_cast<int>(topo.layout.sections.size());
    const int k = topo.layout.k_sources;

    std::vector<int> feeds(n_sections, 0);
    for (const auto& sp : topo.splitters) {
        if (sp.inputs.empty())
            v.push_back("splitter " + std::to_string(sp.id) + " has no inputs");
        if (!(sp.transmit_ratio > 0.0 && sp.transmit_ratio < 1.0))
            v.push_back("splitter " + std::to_string(sp.id) + " transmit ratio outside (0, 1)");
        std::set<int> sources_in;
        for (const auto& in : sp.inputs) {
            if (in.section < 0 || in.section >= n_sections) {
                v.push_back("splitter " + std::to_string(sp.id) + " references a bad section");
                continue;
            }
            feeds[in.section]++;
            const int src = in.section % k;
            if (!sources_in.insert(src).second)
                v.push_back("source self-interference: both sections of source " +
                            source_label(src) + " feed splitter " + std::to_string(sp.id));
            if (!(in.weight > 0.0 && in.weight <= 1.0))
                v.push_back("splitter " + std::to_string(sp.id) + " input weight outside (0, 1]");
        }
    }
    for (int i = 0; i < n_sections; ++i)
        if (feeds[i] != 1)
            v.push_back("section " + topo.layout.sections[i].label + " feeds " +
                        std::to_string(feeds[i]) + " splitter inputs, expected 1");

    for (int s = 0; s < k; ++s) {
        const auto [spa, ina] = topo.section_destination(s);
        const auto [spb, inb] = topo.section_destination(s + k);
        std::set<int> reached;
        if (spa >= 0) reached.insert(spa);
        if (spb >= 0) reached.insert(spb);
        if (reached.size() != 2)
            v.push_back("source " + source_label(s) + " reaches " +
                        std::to_string(reached.size()) + " splitters, expected 2");
    }

    std::vector<int> outputs(topo.users.size(), 0);
    for (const auto& sp : topo.splitters)
        for (int u : sp.output_users)
            if (u >= 0 && u < static_cast<int>(outputs.size())) outputs[u]++;
    for (const auto& u : topo.users)
        if (outputs[u.id] != 1)
            v.push_back("user " + u.name + " sits on " + std::to_string(outputs[u.id]) +
                        " splitter outputs, expected 1");

    for (const auto& l : topo.links) {
        if (l.user_a == l.user_b) v.push_back("self-loop link on user " +
                                              topo.users[l.user_a].name);
        if (topo.users[l.user_a].splitter == topo.users[l.user_b].splitter)
            v.push_back("link " + topo.link_name(l) + " connects users on the same splitter");
    }

    const int n = topo.n_users();
    if (topo.scheme == Scheme::PaperN6) {
        if (n != 6 || topo.n_sources() != 3 || topo.links.size() != 12)
            v.push_back("paper_n6 must have 6 users, 3 sources, 12 links");
    }
    const int full = n * (n - 2) / 2;
    if (topo.scheme == Scheme::Complete && static_cast<int>(topo.links.size()) != full)
        v.push_back("complete scheme has " + std::to_string(topo.links.size()) +
                    " links, expected " + std::to_string(full));
    if (topo.scheme == Scheme::Cyclic && static_cast<int>(topo.links.size()) < full)
        v.push_back("warning: incomplete connectivity: " + std::to_string(topo.links.size()) +
                    " of " + std::to_string(full) + " user pairs are linked");

    if (topo.parity_table) {
        for (const auto& l : topo.links) {
            const int ra = topo.users[l.user_a].path_reflections;
            const int rb = topo.users[l.user_b].path_reflections;
            const auto it = topo.parity_table->find(topo.link_name(l));
            if (ra >= 0 && rb >= 0 && it != topo.parity_table->end()) {
                const BellKind computed =
                    (ra + rb) % 2 == 0 ? BellKind::PhiMinus : BellKind::PhiPlus;
                if (computed != it->second)
                    v.push_back("warning: parity table overrides computed reflection parity "
                                "for link " + topo.link_name(l));
            }
        }
    }
    return v;
}

/// Links that survive the failure of one splitter node.
inline std::vector<Link> links_after_splitter_failure(const Topology& topo, int splitter_id) {
    std::vector<Link> out;
    const auto& dead = topo.splitters.at(splitter_id).output_users;
    for (const auto& l : topo.links)
        if (l.user_a != dead[0] && l.user_a != dead[1] && l.user_b != dead[0] &&
            l.user_b != dead[1])
            out.push_back(l);
    return out;
}

/// DOT rendering of the quantum correlation graph.
inline std::string to_dot(const Topology& topo) {
    std::ostringstream os;
    os << "graph network {\n  layout=circo;\n";
    for (const auto& u : topo.users) os << "  " << u.name << " [shape=circle];\n";
    for (const auto& l : topo.links)
        os << "  " << topo.users[l.user_a].name << " -- " << topo.users[l.user_b].name
           << " [label=\"" << source_label(l.source) << "/" << to_string(l.bell) << "\""
           << (l.bell == BellKind::PhiPlus ? "" : " style=dashed") << "];\n";
    os << "}\n";
    return os.str();
}

}  // namespace ringqkd
