#pragma once

// Monte-Carlo generation of time-tagged detection events for a network model,
// the closed-form rate oracle used to verify it, and the pump-power scan.
//
// Event model per source: pair emissions are a Poisson process; each photon
// is independently coupled (per-section efficiency), routed at its splitter,
// and detected (per-user efficiency). The joint PBS outcome of a pair is
// drawn from the link state at the analyzer settings scheduled at emission
// time; lone survivors keep their half of the draw (the marginal). Detector
// timestamps get Gaussian jitter; dark counts are independent Poisson
// processes per channel. Identical (model, config, seed) give identical tags.

#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <random>
#include <tuple>
#include <vector>

#include "ringqkd/common.hpp"
#include "ringqkd/qstate.hpp"
#include "ringqkd/source.hpp"
#include "ringqkd/timetags.hpp"
#include "ringqkd/topology.hpp"

namespace ringqkd {

struct ArmSetting {
    double theta_deg = 0.0;
    bool quarter = false;
};

struct ScheduleBlock {
    std::int64_t t0_ps = 0;
    std::int64_t t1_ps = 0;
    std::vector<ArmSetting> user_setting;  // one per user
};

enum class ScheduleMode { SplitHvDa, Random, Chsh, Tomography };

/// Piecewise-constant analyzer settings for every user over the run.
struct BasisSchedule {
    ScheduleMode mode = ScheduleMode::SplitHvDa;
    std::vector<ScheduleBlock> blocks;

    int block_at(std::int64_t t_ps) const {
        int lo = 0, hi = static_cast<int>(blocks.size()) - 1;
        while (lo < hi) {
            const int mid = (lo + hi + 1) / 2;
            if (blocks[mid].t0_ps <= t_ps)
                lo = mid;
            else
                hi = mid - 1;
        }
        return lo;
    }
};

/// HV for the first half of the run, DA for the second; all links matched.
inline BasisSchedule make_split_schedule(int n_users, std::int64_t duration_ps) {
    BasisSchedule s;
    s.mode = ScheduleMode::SplitHvDa;
    s.blocks.push_back({0, duration_ps / 2, std::vector<ArmSetting>(n_users, {0.0, false})});
    s.blocks.push_back(
        {duration_ps / 2, duration_ps, std::vector<ArmSetting>(n_users, {45.0, false})});
    return s;
}

/// Independent per-user HV/DA choice per slot, Bernoulli(p_da) from the seed.
inline BasisSchedule make_random_schedule(int n_users, std::int64_t duration_ps,
                                          std::int64_t slot_ps, std::uint64_t seed,
                                          double p_da = 0.5) {
    if (slot_ps <= 0) throw config_error("schedule: slot must be positive");
    BasisSchedule s;
    s.mode = ScheduleMode::Random;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      0x5c4edu};
    std::mt19937_64 rng(seq);
    std::bernoulli_distribution da(p_da);
    for (std::int64_t t = 0; t < duration_ps; t += slot_ps) {
        ScheduleBlock b{t, std::min(t + slot_ps, duration_ps), {}};
        b.user_setting.reserve(n_users);
        for (int u = 0; u < n_users; ++u)
            b.user_setting.push_back({da(rng) ? 45.0 : 0.0, false});
        s.blocks.push_back(std::move(b));
    }
    return s;
}

/// Four equal blocks with the canonical CHSH angle combinations on one link's
/// two users: (a,b), (a,b'), (a',b), (a',b'). Other users sit at 0.
inline BasisSchedule make_chsh_schedule(const Topology& topo, std::int64_t duration_ps,
                                        const Link& link) {
    BasisSchedule s;
    s.mode = ScheduleMode::Chsh;
    const double sign = link.bell == BellKind::PhiPlus ? 1.0 : -1.0;
    const double a[2] = {0.0, 45.0};
    const double b[2] = {normalize_angle_deg(sign * 22.5), normalize_angle_deg(sign * 67.5)};
    int idx = 0;
    for (int ia = 0; ia < 2; ++ia)
        for (int ib = 0; ib < 2; ++ib, ++idx) {
            ScheduleBlock blk{duration_ps * idx / 4, duration_ps * (idx + 1) / 4,
                              std::vector<ArmSetting>(topo.n_users(), {0.0, false})};
            blk.user_setting[link.user_a] = {a[ia], false};
            blk.user_setting[link.user_b] = {b[ib], false};
            s.blocks.push_back(std::move(blk));
        }
    return s;
}

/// 36 equal blocks stepping both users of a link through the six analyzer
/// states used for state reconstruction. Other users sit at 0.
inline BasisSchedule make_tomography_schedule(const Topology& topo, std::int64_t duration_ps,
                                              const Link& link) {
    BasisSchedule s;
    s.mode = ScheduleMode::Tomography;
    const auto& arms = tomography_arm_states();
    int idx = 0;
    for (const auto& [ta, qa] : arms)
        for (const auto& [tb, qb] : arms) {
            ScheduleBlock blk{duration_ps * idx / 36, duration_ps * (idx + 1) / 36,
                              std::vector<ArmSetting>(topo.n_users(), {0.0, false})};
            blk.user_setting[link.user_a] = {ta, qa};
            blk.user_setting[link.user_b] = {tb, qb};
            s.blocks.push_back(std::move(blk));
            ++idx;
        }
    return s;
}

/// Per-link two-qubit state parameters (Werner visibility plus optional
/// extra damping of the HH-VV coherence).
struct LinkStateParams {
    double visibility = 1.0;
    double damping = 0.0;
};

using UserPair = std::pair<int, int>;

/// Everything the rate oracle and the event generator consume: wiring,
/// per-source pair rates, per-section couplings (in the layout) and the
/// per-link state parameters.
struct NetworkModel {
    Topology topology;
    std::vector<double> source_pair_rate;          // pairs/s, size K
    std::map<UserPair, LinkStateParams> link_states;

    const Link* find_link(int u, int v) const {
        for (const auto& l : topology.links)
            if (l.user_a == std::min(u, v) && l.user_b == std::max(u, v)) return &l;
        return nullptr;
    }

    LinkStateParams state_params(int u, int v) const {
        const auto it = link_states.find({std::min(u, v), std::max(u, v)});
        return it == link_states.end() ? LinkStateParams{} : it->second;
    }

    TwoQubitState link_state(const Link& l) const {
        const auto p = state_params(l.user_a, l.user_b);
        return phase_damped_werner(l.bell, p.visibility, p.damping);
    }

    void validate() const {
        if (static_cast<int>(source_pair_rate.size()) != topology.n_sources())
            throw config_error("model: expected one pair rate per source");
        for (double r : source_pair_rate)
            if (r < 0.0 || !std::isfinite(r))
                throw config_error("model: pair rates must be finite and >= 0");
    }
};

// ---------------------------------------------------------------------------
// Analytic rate oracle

struct LinkRates {
    double singles_a = 0.0;          // user totals, dark counts included
    double singles_b = 0.0;
    double true_coincidence = 0.0;   // window-accepted pair detection rate
    double accidental = 0.0;         // singles_a * singles_b * window
    // Outcome-resolved rates at matched settings, accidentals folded in:
    // HH, HV, VH, VV (analyzers at 0) then DD, DA, AD, AA (analyzers at 45).
    std::array<double, 8> basis_rates{};
};

namespace detail {

/// Probability that the jittered arrival difference of a true pair lands
/// inside a centered window of full width `window_ps`.
inline double window_efficiency(double sigma_a_ps, double sigma_b_ps, std::int64_t window_ps) {
    const double sigma = std::sqrt(sigma_a_ps * sigma_a_ps + sigma_b_ps * sigma_b_ps);
    if (sigma <= 0.0) return 1.0;
    return std::erf(0.5 * static_cast<double>(window_ps) / (sigma * std::sqrt(2.0)));
}

/// Detected pair rate of a source into a specific user pair, before the
/// coincidence window: mu eta_a eta_b route_a route_b det_a det_b.
inline double pair_detection_rate(const NetworkModel& model, int source, int user_a,
                                  int user_b) {
    const auto& topo = model.topology;
    const int k = topo.layout.k_sources;
    const auto [spa, ina] = topo.section_destination(source);
    const auto [spb, inb] = topo.section_destination(source + k);
    const auto& x = topo.splitters[spa];
    const auto& y = topo.splitters[spb];
    double rate = 0.0;
    for (int ox = 0; ox < 2; ++ox)
        for (int oy = 0; oy < 2; ++oy) {
            const int u = x.output_users[ox];
            const int v = y.output_users[oy];
            if (std::min(u, v) != std::min(user_a, user_b) ||
                std::max(u, v) != std::max(user_a, user_b))
                continue;
            rate += model.source_pair_rate[source] *
                    topo.layout.sections[source].coupling_efficiency *
                    topo.layout.sections[source + k].coupling_efficiency *
                    x.route_probability(ina, ox) * y.route_probability(inb, oy) *
                    topo.users[u].detector.efficiency * topo.users[v].detector.efficiency;
        }
    return rate;
}

}  // namespace detail

/// Detected photon rate per user (both PBS ports, dark counts included).
inline double user_singles_rate(const NetworkModel& model, int user_id) {
    const auto& topo = model.topology;
    const int k = topo.layout.k_sources;
    const auto& user = topo.users[user_id];
    const auto& sp = topo.splitters[user.splitter];
    const int port = sp.output_users[0] == user_id ? 0 : 1;
    double rate = user.detector.dark_rate;
    for (int in = 0; in < static_cast<int>(sp.inputs.size()); ++in) {
        const int section = sp.inputs[in].section;
        rate += model.source_pair_rate[section % k] *
                topo.layout.sections[section].coupling_efficiency *
                sp.route_probability(in, port) * user.detector.efficiency;
    }
    return rate;
}

/// Expected tag rate per detector channel. The per-port split uses the link
/// states' transmit marginal (1/2 for the Werner family) plus half the
/// user's dark rate.
inline std::vector<double> channel_singles_rates(const NetworkModel& model) {
    std::vector<double> rates(model.topology.n_channels(), 0.0);
    for (const auto& u : model.topology.users) {
        const double photons = user_singles_rate(model, u.id) - u.detector.dark_rate;
        rates[model.topology.channel(u.id, 0)] = 0.5 * photons + 0.5 * u.detector.dark_rate;
        rates[model.topology.channel(u.id, 1)] = 0.5 * photons + 0.5 * u.detector.dark_rate;
    }
    return rates;
}

/// Closed-form per-link rates for a coincidence window of full width
/// `window_ps`; the oracle the Monte-Carlo engine is checked against.
inline std::map<UserPair, LinkRates> analytic_link_rates(const NetworkModel& model,
                                                         std::int64_t window_ps) {
    model.validate();
    const auto& topo = model.topology;
    const double tau = static_cast<double>(window_ps) * 1e-12;
    std::map<UserPair, LinkRates> out;
    for (const auto& link : topo.links) {
        LinkRates r;
        r.singles_a = user_singles_rate(model, link.user_a);
        r.singles_b = user_singles_rate(model, link.user_b);
        r.accidental = r.singles_a * r.singles_b * tau;

        double detected = 0.0;
        for (int s = 0; s < topo.n_sources(); ++s)
            detected += detail::pair_detection_rate(model, s, link.user_a, link.user_b);
        const double eps = detail::window_efficiency(
            topo.users[link.user_a].detector.jitter_sigma_ps,
            topo.users[link.user_b].detector.jitter_sigma_ps, window_ps);
        r.true_coincidence = detected * eps;

        const auto state = model.link_state(link);
        for (int basis = 0; basis < 2; ++basis) {
            const double theta = basis == 0 ? 0.0 : 45.0;
            const auto p = joint_outcome_probabilities(state, {theta, theta});
            for (int o = 0; o < 4; ++o)
                r.basis_rates[4 * basis + o] =
                    r.true_coincidence * p[o] + r.accidental / 4.0;
        }
        out[{link.user_a, link.user_b}] = r;
    }
    return out;
}

/// Accidental-only rate of a user pair with no shared source (same-splitter
/// neighbours): singles_u * singles_v * window.
inline double accidental_rate(const NetworkModel& model, int user_a, int user_b,
                              std::int64_t window_ps) {
    return user_singles_rate(model, user_a) * user_singles_rate(model, user_b) *
           static_cast<double>(window_ps) * 1e-12;
}

// ---------------------------------------------------------------------------
// Event generation

struct SimConfig {
    double duration_s = 1.0;
    std::uint64_t seed = 0;
    std::int64_t window_ps = 2000;  // downstream analysis default
    BasisSchedule schedule;
    int threads = 1;

    void validate() const {
        if (!(duration_s > 0.0)) throw config_error("sim: duration must be positive");
        if (window_ps <= 0) throw config_error("sim: window must be positive");
        if (schedule.blocks.empty()) throw config_error("sim: empty schedule");
    }
};

namespace detail {

inline std::mt19937_64 child_rng(std::uint64_t seed, std::uint32_t stream_kind,
                                 std::uint32_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream_kind, stream_id};
    return std::mt19937_64(seq);
}

struct SourceGeometry {
    int splitter_a, input_a, splitter_b, input_b;
    double coupling_a, coupling_b;
};

/// Tags produced by one source, grouped per channel.
inline std::vector<std::vector<std::int64_t>> simulate_source(
    const NetworkModel& model, const SimConfig& cfg, int source, std::int64_t duration_ps) {
    const auto& topo = model.topology;
    const int k = topo.layout.k_sources;
    auto rng = child_rng(cfg.seed, 0x70A1u, static_cast<std::uint32_t>(source));

    const auto [spa, ina] = topo.section_destination(source);
    const auto [spb, inb] = topo.section_destination(source + k);
    const SourceGeometry geo{spa, ina, spb, inb,
                             topo.layout.sections[source].coupling_efficiency,
                             topo.layout.sections[source + k].coupling_efficiency};
    const auto& x = topo.splitters[geo.splitter_a];
    const auto& y = topo.splitters[geo.splitter_b];

    // Routing at a two-output splitter: pick output 0 with its route probability.
    const double p_out0_a = x.route_probability(geo.input_a, 0);
    const double p_out1_a = x.route_probability(geo.input_a, 1);
    const double p_out0_b = y.route_probability(geo.input_b, 0);
    const double p_out1_b = y.route_probability(geo.input_b, 1);
    // Multiport combiners lose photons: survival is the sum of both outputs.
    const double survive_a = p_out0_a + p_out1_a;
    const double survive_b = p_out0_b + p_out1_b;

    std::vector<std::vector<std::int64_t>> channels(topo.n_channels());
    std::poisson_distribution<long long> n_pairs_dist(model.source_pair_rate[source] *
                                                      cfg.duration_s);
    std::uniform_int_distribution<std::int64_t> time_dist(0, duration_ps - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Joint outcome tables per (schedule block, routed user pair).
    std::map<std::tuple<int, int, int>, std::array<double, 4>> prob_cache;
    const auto joint_probs = [&](int block, int ua, int ub) -> const std::array<double, 4>& {
        const auto key = std::make_tuple(block, ua, ub);
        auto it = prob_cache.find(key);
        if (it == prob_cache.end()) {
            const Link* link = model.find_link(ua, ub);
            BellKind kind = link ? link->bell : BellKind::PhiMinus;
            const auto params = model.state_params(ua, ub);
            const auto state = phase_damped_werner(kind, params.visibility, params.damping);
            const auto& sa = cfg.schedule.blocks[block].user_setting[ua];
            const auto& sb = cfg.schedule.blocks[block].user_setting[ub];
            it = prob_cache
                     .emplace(key, joint_outcome_probabilities(
                                       state, {sa.theta_deg, sb.theta_deg, sa.quarter,
                                               sb.quarter}))
                     .first;
        }
        return it->second;
    };

    const long long n_pairs = n_pairs_dist(rng);
    for (long long i = 0; i < n_pairs; ++i) {
        const std::int64_t t = time_dist(rng);

        const bool coupled_a = unit(rng) < geo.coupling_a;
        const bool coupled_b = unit(rng) < geo.coupling_b;
        if (!coupled_a && !coupled_b) continue;

        // Route through the splitters; combiners may absorb the photon.
        const double ra = unit(rng);
        const double rb = unit(rng);
        const bool alive_a = coupled_a && ra < survive_a;
        const bool alive_b = coupled_b && rb < survive_b;
        if (!alive_a && !alive_b) continue;
        const int user_a = x.output_users[ra < p_out0_a ? 0 : 1];
        const int user_b = y.output_users[rb < p_out0_b ? 0 : 1];

        const int block = cfg.schedule.block_at(t);
        const auto& probs = joint_probs(block, user_a, user_b);
        const double o = unit(rng);
        int outcome = 3;
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) {
            acc += probs[j];
            if (o < acc) {
                outcome = j;
                break;
            }
        }
        const int port_a = outcome >> 1;   // 0 = transmitted
        const int port_b = outcome & 1;

        if (alive_a) {
            const auto& det = topo.users[user_a].detector;
            if (unit(rng) < det.efficiency) {
                std::int64_t ta = t;
                if (det.jitter_sigma_ps > 0.0)
                    ta += std::llround(std::normal_distribution<double>(
                        0.0, det.jitter_sigma_ps)(rng));
                channels[topo.channel(user_a, port_a)].push_back(ta);
            }
        }
        if (alive_b) {
            const auto& det = topo.users[user_b].detector;
            if (unit(rng) < det.efficiency) {
                std::int64_t tb = t;
                if (det.jitter_sigma_ps > 0.0)
                    tb += std::llround(std::normal_distribution<double>(
                        0.0, det.jitter_sigma_ps)(rng));
                channels[topo.channel(user_b, port_b)].push_back(tb);
            }
        }
    }
    return channels;
}

}  // namespace detail

/// Run the event generator. Reproducible: identical (model, config) including
/// the seed give byte-identical tag sets, independent of the thread count.
inline TimeTagSet simulate(const NetworkModel& model, const SimConfig& cfg,
                           const std::string& config_hash = "") {
    model.validate();
    cfg.validate();
    const auto& topo = model.topology;
    const std::int64_t duration_ps = std::llround(cfg.duration_s * 1e12);

    TimeTagSet tags(topo.n_channels(), {duration_ps, cfg.seed, config_hash});

    std::vector<std::future<std::vector<std::vector<std::int64_t>>>> jobs;
    const auto policy = cfg.threads > 1 ? std::launch::async : std::launch::deferred;
    for (int s = 0; s < topo.n_sources(); ++s)
        jobs.push_back(std::async(policy, [&, s] {
            return detail::simulate_source(model, cfg, s, duration_ps);
        }));
    for (auto& job : jobs) {
        const auto channels = job.get();
        for (int c = 0; c < topo.n_channels(); ++c) {
            auto& dst = tags.mutable_channel(c);
            dst.insert(dst.end(), channels[c].begin(), channels[c].end());
        }
    }

    // Dark counts: one Poisson stream per detector channel, half the user
    // dark rate per PBS port.
    for (const auto& u : topo.users) {
        for (int port = 0; port < 2; ++port) {
            const int c = topo.channel(u.id, port);
            auto rng = detail::child_rng(cfg.seed, 0xDA2Cu, static_cast<std::uint32_t>(c));
            std::poisson_distribution<long long> n_dist(0.5 * u.detector.dark_rate *
                                                        cfg.duration_s);
            std::uniform_int_distribution<std::int64_t> time_dist(0, duration_ps - 1);
            const long long n = n_dist(rng);
            auto& dst = tags.mutable_channel(c);
            for (long long i = 0; i < n; ++i) dst.push_back(time_dist(rng));
        }
    }

    tags.finalize();
    return tags;
}

// ---------------------------------------------------------------------------
// Pump-power scan

struct ScanRow {
    double power_mw = 0.0;
    double coincidence_rate = 0.0;  // per diametric source
    double s_param = 0.0;
};

/// Closed-form scan of source performance vs pump power for one temperature
/// profile. The Bell parameter maps onto a state visibility v = S/(2 sqrt 2)
/// when a state model is needed downstream.
inline std::vector<ScanRow> scan_power(const TempProfile& profile,
                                       const std::vector<double>& powers_mw,
                                       int k_sources = 1) {
    if (powers_mw.empty()) throw config_error("scan: power list is empty");
    std::vector<ScanRow> rows;
    rows.reserve(powers_mw.size());
    for (double p : powers_mw) {
        if (p < 0.0) throw config_error("scan: negative pump power");
        SourceParams params{p, profile, make_sections(k_sources)};
        rows.push_back({p, pair_rate(params), bell_s_vs_power(params)});
    }
    return rows;
}

}  // namespace ringqkd
