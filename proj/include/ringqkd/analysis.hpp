#pragma once

// Turn time-tag streams into link- and network-level metrics: coincidence
// counting, delay scans, visibility/QBER/CHSH estimation, tomography drivers
// and sifted/secure key aggregation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ringqkd/common.hpp"
#include "ringqkd/qstate.hpp"
#include "ringqkd/sim.hpp"
#include "ringqkd/timetags.hpp"
#include "ringqkd/topology.hpp"

namespace ringqkd {

/// Greedy one-to-one coincidence counter. A pair matches when
/// |t_a - (t_b + delay)| <= window/2; each tag is used at most once, earliest
/// candidates first, the hardware-counter semantics. Linear time.
inline std::int64_t count_coincidences(std::span<const std::int64_t> a,
                                       std::span<const std::int64_t> b,
                                       std::int64_t window_ps, std::int64_t delay_ps = 0) {
    if (window_ps <= 0) throw std::invalid_argument("count_coincidences: window must be > 0");
    if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end()))
        throw data_error("count_coincidences: input streams must be sorted");
    const std::int64_t half = window_ps / 2;
    std::size_t i = 0, j = 0;
    std::int64_t count = 0;
    while (i < a.size() && j < b.size()) {
        const std::int64_t d = a[i] - (b[j] + delay_ps);
        if (d < -half)
            ++i;
        else if (d > half)
            ++j;
        else {
            ++count;
            ++i;
            ++j;
        }
    }
    return count;
}

/// Every in-window pair, tags reused freely. Cross-check mode whose mean is
/// exactly rate_a * rate_b * window * duration for independent streams.
inline std::int64_t count_coincidences_all_pairs(std::span<const std::int64_t> a,
                                                 std::span<const std::int64_t> b,
                                                 std::int64_t window_ps,
                                                 std::int64_t delay_ps = 0) {
    if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end()))
        throw data_error("count_coincidences_all_pairs: input streams must be sorted");
    const std::int64_t half = window_ps / 2;
    std::size_t lo = 0, hi = 0;
    std::int64_t count = 0;
    for (const std::int64_t t : a) {
        while (lo < b.size() && b[lo] + delay_ps < t - half) ++lo;
        if (hi < lo) hi = lo;
        while (hi < b.size() && b[hi] + delay_ps <= t + half) ++hi;
        count += static_cast<std::int64_t>(hi - lo);
    }
    return count;
}

struct CoincidenceHistogram {
    std::vector<std::int64_t> delays_ps;
    std::vector<std::int64_t> counts;
    std::int64_t window_ps = 0;
};

inline CoincidenceHistogram delay_scan(std::span<const std::int64_t> a,
                                       std::span<const std::int64_t> b,
                                       std::int64_t range_ps, std::int64_t step_ps,
                                       std::int64_t window_ps) {
    if (step_ps <= 0) throw std::invalid_argument("delay_scan: step must be > 0");
    CoincidenceHistogram h;
    h.window_ps = window_ps;
    for (std::int64_t d = -range_ps; d <= range_ps; d += step_ps) {
        h.delays_ps.push_back(d);
        h.counts.push_back(count_coincidences(a, b, window_ps, d));
    }
    return h;
}

inline void write_histogram_csv(const CoincidenceHistogram& h, std::ostream& out) {
    out << "delay_ps,counts\n";
    for (std::size_t i = 0; i < h.delays_ps.size(); ++i)
        out << h.delays_ps[i] << ',' << h.counts[i] << '\n';
}

// ---------------------------------------------------------------------------
// Link metrics

struct LinkMetrics {
    double coincidence_rate = 0.0;  // matched-basis coincidences per matched second
    double accidental_rate = 0.0;   // measured at a 20 ns delay offset
    double v_hv = 0.0;
    double v_da = 0.0;
    double qber = 0.0;
    double c_hv_rate = 0.0;  // per-basis-time rates feeding the key estimate
    double c_da_rate = 0.0;
    double sifted_rate = 0.0;  // matched coincidences per second of total runtime
    double secure_rate = 0.0;  // clamped at zero for reporting
    double secure_rate_raw = 0.0;
    double s_param = std::numeric_limits<double>::quiet_NaN();
    double fidelity = std::numeric_limits<double>::quiet_NaN();
};

enum class SiftedConvention {
    MatchedTotal,  // matched-basis coincidences over total runtime
    RandomHalf,    // half of all coincidences, the random-switching convention
};

namespace detail {

inline bool is_linear_angle(const ArmSetting& s, std::initializer_list<double> axes) {
    if (s.quarter) return false;
    for (double a : axes)
        if (std::abs(normalize_angle_deg(s.theta_deg) - a) < 1e-9) return true;
    return false;
}

/// Outcome polarization axes coincide: port p of an analyzer at theta
/// measures theta + 90 p.
inline bool outcome_co_aligned(const ArmSetting& u, int port_u, const ArmSetting& v,
                               int port_v) {
    const double au = normalize_angle_deg(u.theta_deg + 90.0 * port_u);
    const double av = normalize_angle_deg(v.theta_deg + 90.0 * port_v);
    return std::abs(au - av) < 1e-9;
}

inline std::span<const std::int64_t> slice(std::span<const std::int64_t> tags,
                                           std::int64_t t0, std::int64_t t1) {
    const auto lo = std::lower_bound(tags.begin(), tags.end(), t0);
    const auto hi = std::lower_bound(tags.begin(), tags.end(), t1);
    return tags.subspan(lo - tags.begin(), hi - lo);
}

struct BasisCounts {
    std::int64_t co = 0;
    std::int64_t cross = 0;
    std::int64_t time_ps = 0;
    std::int64_t total() const { return co + cross; }
};

/// Port-pair coincidences of one link inside one schedule block.
inline void accumulate_block(const TimeTagSet& tags, const Topology& topo, const Link& link,
                             const ScheduleBlock& blk, std::int64_t window_ps,
                             BasisCounts& out) {
    const auto& su = blk.user_setting[link.user_a];
    const auto& sv = blk.user_setting[link.user_b];
    for (int pu = 0; pu < 2; ++pu)
        for (int pv = 0; pv < 2; ++pv) {
            const auto cu = slice(tags.channel(topo.channel(link.user_a, pu)), blk.t0_ps,
                                  blk.t1_ps);
            const auto cv = slice(tags.channel(topo.channel(link.user_b, pv)), blk.t0_ps,
                                  blk.t1_ps);
            const std::int64_t n = count_coincidences(cu, cv, window_ps);
            (outcome_co_aligned(su, pu, sv, pv) ? out.co : out.cross) += n;
        }
    out.time_ps += blk.t1_ps - blk.t0_ps;
}

}  // namespace detail

/// Coincidence rate of a user pair over the whole run at a delay offset,
/// summed over the four port combinations. At 20 ns this is the accidental
/// floor estimator.
inline double delayed_coincidence_rate(const TimeTagSet& tags, const Topology& topo, int user_a,
                                       int user_b, std::int64_t window_ps,
                                       std::int64_t delay_ps) {
    std::int64_t n = 0;
    for (int pu = 0; pu < 2; ++pu)
        for (int pv = 0; pv < 2; ++pv)
            n += count_coincidences(tags.channel(topo.channel(user_a, pu)),
                                    tags.channel(topo.channel(user_b, pv)), window_ps,
                                    delay_ps);
    return static_cast<double>(n) / (static_cast<double>(tags.meta().duration_ps) * 1e-12);
}

inline constexpr std::int64_t kAccidentalProbeDelayPs = 20'000;

/// Visibilities, QBER and key rates of one link from a tag set recorded under
/// a schedule with matched HV and DA segments.
inline LinkMetrics estimate_link_metrics(const TimeTagSet& tags, const BasisSchedule& schedule,
                                         const Topology& topo, const Link& link,
                                         std::int64_t window_ps, double m = 1.1,
                                         SiftedConvention convention =
                                             SiftedConvention::MatchedTotal) {
    detail::BasisCounts hv, da;
    std::int64_t all_matched = 0;
    for (const auto& blk : schedule.blocks) {
        const auto& su = blk.user_setting[link.user_a];
        const auto& sv = blk.user_setting[link.user_b];
        const bool u_hv = detail::is_linear_angle(su, {0.0, 90.0});
        const bool v_hv = detail::is_linear_angle(sv, {0.0, 90.0});
        const bool u_da = detail::is_linear_angle(su, {45.0, 135.0});
        const bool v_da = detail::is_linear_angle(sv, {45.0, 135.0});
        if (u_hv && v_hv)
            detail::accumulate_block(tags, topo, link, blk, window_ps, hv);
        else if (u_da && v_da)
            detail::accumulate_block(tags, topo, link, blk, window_ps, da);
    }
    all_matched = hv.total() + da.total();
    if (hv.total() == 0 || da.total() == 0)
        throw data_error("estimate_link_metrics: insufficient data for link " +
                         topo.link_name(link) + " (no coincidences in HV or DA)");

    const double duration_s = static_cast<double>(tags.meta().duration_ps) * 1e-12;

    LinkMetrics lm;
    // (max - min)/(max + min): PhiMinus links anti-correlate in DA, so the
    // crossed outcomes carry the maximum there.
    lm.v_hv = std::abs(static_cast<double>(hv.co - hv.cross)) /
              static_cast<double>(hv.total());
    lm.v_da = std::abs(static_cast<double>(da.co - da.cross)) /
              static_cast<double>(da.total());
    lm.qber = qber_from_visibility(0.5 * (lm.v_hv + lm.v_da));
    lm.c_hv_rate = static_cast<double>(hv.total()) / (static_cast<double>(hv.time_ps) * 1e-12);
    lm.c_da_rate = static_cast<double>(da.total()) / (static_cast<double>(da.time_ps) * 1e-12);
    lm.coincidence_rate = static_cast<double>(all_matched) /
                          (static_cast<double>(hv.time_ps + da.time_ps) * 1e-12);
    lm.sifted_rate = convention == SiftedConvention::MatchedTotal
                         ? static_cast<double>(all_matched) / duration_s
                         : 0.5 * static_cast<double>(all_matched) / duration_s;
    lm.accidental_rate = delayed_coincidence_rate(tags, topo, link.user_a, link.user_b,
                                                  window_ps, kAccidentalProbeDelayPs);
    lm.secure_rate_raw = secure_key_rate({lm.c_hv_rate, lm.c_da_rate,
                                          std::clamp(lm.v_hv, 0.0, 1.0),
                                          std::clamp(lm.v_da, 0.0, 1.0), m});
    lm.secure_rate = std::max(0.0, lm.secure_rate_raw);
    return lm;
}

/// Infinite-statistics path: the same estimators applied to oracle rates.
inline LinkMetrics metrics_from_rates(const LinkRates& rates, double m = 1.1) {
    LinkMetrics lm;
    const double co_hv = rates.basis_rates[0] + rates.basis_rates[3];
    const double cross_hv = rates.basis_rates[1] + rates.basis_rates[2];
    const double co_da = rates.basis_rates[4] + rates.basis_rates[7];
    const double cross_da = rates.basis_rates[5] + rates.basis_rates[6];
    if (co_hv + cross_hv <= 0.0 || co_da + cross_da <= 0.0)
        throw data_error("metrics_from_rates: zero coincidence rate");
    lm.v_hv = std::abs(co_hv - cross_hv) / (co_hv + cross_hv);
    lm.v_da = std::abs(co_da - cross_da) / (co_da + cross_da);
    lm.qber = qber_from_visibility(0.5 * (lm.v_hv + lm.v_da));
    lm.c_hv_rate = co_hv + cross_hv;
    lm.c_da_rate = co_da + cross_da;
    lm.coincidence_rate = 0.5 * (lm.c_hv_rate + lm.c_da_rate);
    lm.sifted_rate = lm.coincidence_rate;
    lm.accidental_rate = rates.accidental;
    lm.secure_rate_raw = secure_key_rate({lm.c_hv_rate, lm.c_da_rate,
                                          std::clamp(lm.v_hv, 0.0, 1.0),
                                          std::clamp(lm.v_da, 0.0, 1.0), m});
    lm.secure_rate = std::max(0.0, lm.secure_rate_raw);
    // Visibility-derived Bell parameter, exact for the Werner family.
    lm.s_param = kTsirelson * 0.5 * (lm.v_hv + lm.v_da);
    return lm;
}

/// CHSH estimate from a tag set recorded under a four-block CHSH schedule
/// (make_chsh_schedule block order).
inline double estimate_chsh(const TimeTagSet& tags, const BasisSchedule& schedule,
                            const Topology& topo, const Link& link, std::int64_t window_ps) {
    if (schedule.mode != ScheduleMode::Chsh || schedule.blocks.size() != 4)
        throw data_error("estimate_chsh: needs the four-block CHSH schedule");
    std::array<double, 4> e{};
    for (int blk = 0; blk < 4; ++blk) {
        const auto& b = schedule.blocks[blk];
        std::int64_t n[2][2];
        for (int pu = 0; pu < 2; ++pu)
            for (int pv = 0; pv < 2; ++pv)
                n[pu][pv] = count_coincidences(
                    detail::slice(tags.channel(topo.channel(link.user_a, pu)), b.t0_ps,
                                  b.t1_ps),
                    detail::slice(tags.channel(topo.channel(link.user_b, pv)), b.t0_ps,
                                  b.t1_ps),
                    window_ps);
        const double total = static_cast<double>(n[0][0] + n[0][1] + n[1][0] + n[1][1]);
        if (total <= 0.0)
            throw data_error("estimate_chsh: no coincidences in block " + std::to_string(blk));
        e[blk] = static_cast<double>(n[0][0] - n[0][1] - n[1][0] + n[1][1]) / total;
    }
    return e[0] - e[1] + e[2] + e[3];
}

struct TomographyResult {
    TwoQubitState state;
    double fidelity = 0.0;  // against the link's declared Bell kind
};

/// State reconstruction of one link from tags recorded under the 36-block
/// tomography schedule. Raw counts, no accidental subtraction.
inline TomographyResult run_tomography(const TimeTagSet& tags, const BasisSchedule& schedule,
                                       const Topology& topo, const Link& link,
                                       std::int64_t window_ps) {
    if (schedule.mode != ScheduleMode::Tomography)
        throw data_error("run_tomography: needs a tomography schedule");
    std::vector<TomographyRecord> records;
    records.reserve(schedule.blocks.size() * 4);
    for (const auto& b : schedule.blocks) {
        const auto& su = b.user_setting[link.user_a];
        const auto& sv = b.user_setting[link.user_b];
        for (int pu = 0; pu < 2; ++pu)
            for (int pv = 0; pv < 2; ++pv) {
                const std::int64_t n = count_coincidences(
                    detail::slice(tags.channel(topo.channel(link.user_a, pu)), b.t0_ps,
                                  b.t1_ps),
                    detail::slice(tags.channel(topo.channel(link.user_b, pv)), b.t0_ps,
                                  b.t1_ps),
                    window_ps);
                records.push_back(
                    {{normalize_angle_deg(su.theta_deg + 90.0 * pu),
                      normalize_angle_deg(sv.theta_deg + 90.0 * pv), su.quarter, sv.quarter},
                     static_cast<double>(n)});
            }
    }
    TomographyResult res{tomography_reconstruct(records), 0.0};
    res.fidelity = fidelity(res.state, link.bell);
    return res;
}

// ---------------------------------------------------------------------------
// Network aggregation

struct LinkReport {
    std::string name;
    BellKind bell = BellKind::PhiMinus;
    LinkMetrics metrics;
};

struct NetworkReport {
    std::vector<LinkReport> links;
    double sifted_total = 0.0;
    double secure_total = 0.0;
};

/// Sum per-link sifted/secure rates; requires metrics for every link.
inline NetworkReport network_report(const Topology& topo,
                                    const std::map<UserPair, LinkMetrics>& metrics) {
    std::vector<std::string> missing;
    NetworkReport rep;
    for (const auto& l : topo.links) {
        const auto it = metrics.find({l.user_a, l.user_b});
        if (it == metrics.end()) {
            missing.push_back(topo.link_name(l));
            continue;
        }
        rep.links.push_back({topo.link_name(l), l.bell, it->second});
        rep.sifted_total += it->second.sifted_rate;
        rep.secure_total += it->second.secure_rate;
    }
    if (!missing.empty()) {
        std::string what = "network_report: missing metrics for links:";
        for (const auto& name : missing) what += " " + name;
        throw data_error(what);
    }
    return rep;
}

inline void write_links_csv(const NetworkReport& rep, std::ostream& out) {
    const auto cell = [](double v) {
        if (std::isnan(v)) return std::string();
        std::ostringstream os;
        os.precision(10);
        os << v;
        return os.str();
    };
    out << "link,coinc_rate,acc_rate,v_hv,v_da,qber,s,fidelity,sifted,secure\n";
    for (const auto& l : rep.links) {
        const auto& m = l.metrics;
        out << l.name << ',' << cell(m.coincidence_rate) << ',' << cell(m.accidental_rate)
            << ',' << cell(m.v_hv) << ',' << cell(m.v_da) << ',' << cell(m.qber) << ','
            << cell(m.s_param) << ',' << cell(m.fidelity) << ',' << cell(m.sifted_rate) << ','
            << cell(m.secure_rate) << '\n';
    }
}

}  // namespace ringqkd
