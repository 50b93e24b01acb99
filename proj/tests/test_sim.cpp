#include "ringqkd/sim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ringqkd/analysis.hpp"

using namespace ringqkd;
using Catch::Approx;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

bool identical(const TimeTagSet& a, const TimeTagSet& b) {
    if (a.n_channels() != b.n_channels()) return false;
    for (int c = 0; c < a.n_channels(); ++c) {
        const auto sa = a.channel(c), sb = b.channel(c);
        if (!std::equal(sa.begin(), sa.end(), sb.begin(), sb.end())) return false;
    }
    return true;
}

NetworkModel small_model(double mu, double visibility, double coupling = 0.5,
                         double det_eff = 0.9, double dark = 0.0, double jitter = 0.0) {
    BuildOptions opts;
    opts.detector = {det_eff, dark, jitter};
    NetworkModel model;
    model.topology = build_paper_n6(opts);
    for (auto& s : model.topology.layout.sections) s.coupling_efficiency = coupling;
    model.source_pair_rate = {mu, mu, mu};
    for (const auto& l : model.topology.links)
        model.link_states[{l.user_a, l.user_b}] = {visibility, 0.0};
    return model;
}

double matched_coincidences(const TimeTagSet& tags, const Topology& topo, const Link& l,
                            std::int64_t window_ps) {
    return delayed_coincidence_rate(tags, topo, l.user_a, l.user_b, window_ps, 0) *
           static_cast<double>(tags.meta().duration_ps) * 1e-12;
}

}  // namespace

TEST_CASE("schedules tile the run") {
    for (std::int64_t d : {1'000'000'000'000LL, 999'999'999LL}) {
        const auto split = make_split_schedule(6, d);
        REQUIRE(split.blocks.size() == 2);
        CHECK(split.blocks[0].t0_ps == 0);
        CHECK(split.blocks[1].t1_ps == d);
        CHECK(split.blocks[0].t1_ps == split.blocks[1].t0_ps);
        CHECK(split.block_at(0) == 0);
        CHECK(split.block_at(d - 1) == 1);
    }

    const auto random = make_random_schedule(4, 1'000'000, 128, 99);
    std::int64_t t = 0;
    for (const auto& b : random.blocks) {
        CHECK(b.t0_ps == t);
        t = b.t1_ps;
        REQUIRE(b.user_setting.size() == 4);
        for (const auto& s : b.user_setting)
            CHECK((s.theta_deg == 0.0 || s.theta_deg == 45.0));
    }
    CHECK(t == 1'000'000);

    const auto topo = build_paper_n6();
    const auto chsh = make_chsh_schedule(topo, 1'000'000, topo.link_by_name("AC"));
    REQUIRE(chsh.blocks.size() == 4);
    const auto tomo = make_tomography_schedule(topo, 36'000, topo.link_by_name("AC"));
    REQUIRE(tomo.blocks.size() == 36);
    CHECK(tomo.blocks.back().t1_ps == 36'000);
}

TEST_CASE("simulation is deterministic and thread-count independent") {
    auto model = small_model(5e4, 0.9, 0.4, 0.8, 200.0, 150.0);
    SimConfig cfg;
    cfg.duration_s = 0.05;
    cfg.seed = 1234;
    cfg.schedule = make_split_schedule(6, 50'000'000'000LL);

    const auto a = simulate(model, cfg);
    const auto b = simulate(model, cfg);
    CHECK(identical(a, b));

    cfg.threads = 3;
    const auto c = simulate(model, cfg);
    CHECK(identical(a, c));

    cfg.seed = 1235;
    CHECK(!identical(a, simulate(model, cfg)));
}

TEST_CASE("tags stay inside the run window, sorted") {
    auto model = small_model(1e5, 0.85, 0.5, 0.9, 500.0, 200.0);
    SimConfig cfg;
    cfg.duration_s = 0.02;
    cfg.seed = 77;
    cfg.schedule = make_split_schedule(6, 20'000'000'000LL);
    const auto tags = simulate(model, cfg);
    CHECK_NOTHROW(tags.check_sorted());
    for (int c = 0; c < tags.n_channels(); ++c)
        for (const auto t : tags.channel(c)) {
            CHECK(t >= 0);
            CHECK(t <= tags.meta().duration_ps);
        }
}

TEST_CASE("dark-only channels are pure Poisson noise") {
    auto model = small_model(0.0, 1.0, 0.5, 1.0, 1000.0, 0.0);
    SimConfig cfg;
    cfg.duration_s = 1.0;
    cfg.seed = 4711;
    cfg.schedule = make_split_schedule(6, 1'000'000'000'000LL);
    const auto tags = simulate(model, cfg);
    for (const auto& u : model.topology.users) {
        // 1000/s per user, half per port; 4 sigma bands.
        const double per_port = 500.0;
        for (int port = 0; port < 2; ++port) {
            const double n = static_cast<double>(
                tags.channel(model.topology.channel(u.id, port)).size());
            CHECK_THAT(n, WithinAbs(per_port, 4.0 * std::sqrt(per_port)));
        }
    }
}

TEST_CASE("total tag count scales linearly with duration") {
    auto model = small_model(5e4, 0.9, 0.4, 0.8, 300.0, 0.0);
    SimConfig cfg;
    cfg.seed = 99;
    cfg.duration_s = 0.2;
    cfg.schedule = make_split_schedule(6, 200'000'000'000LL);
    const double n1 = static_cast<double>(simulate(model, cfg).total_tags());

    cfg.duration_s = 0.4;
    cfg.schedule = make_split_schedule(6, 400'000'000'000LL);
    const double n2 = static_cast<double>(simulate(model, cfg).total_tags());
    CHECK_THAT(n2, WithinAbs(2.0 * n1, 8.0 * std::sqrt(2.0 * n1)));
}

TEST_CASE("monte carlo agrees with the analytic oracle") {
    std::mt19937_64 rng(2025);
    std::uniform_real_distribution<double> mu_d(2e4, 2e5), cpl_d(0.3, 0.6), det_d(0.5, 0.95),
        vis_d(0.7, 1.0), t_d(0.42, 0.58), dark_d(0.0, 800.0);

    for (int trial = 0; trial < 3; ++trial) {
        BuildOptions opts;
        opts.detector = {det_d(rng), dark_d(rng), 150.0};
        opts.splitter_t = t_d(rng);
        NetworkModel model;
        model.topology = build_paper_n6(opts);
        for (auto& s : model.topology.layout.sections) s.coupling_efficiency = cpl_d(rng);
        model.source_pair_rate = {mu_d(rng), mu_d(rng), mu_d(rng)};
        for (const auto& l : model.topology.links)
            model.link_states[{l.user_a, l.user_b}] = {vis_d(rng), 0.0};

        SimConfig cfg;
        cfg.duration_s = 0.5;
        cfg.seed = 8000 + trial;
        cfg.window_ps = 2000;
        cfg.schedule = make_split_schedule(6, 500'000'000'000LL);
        const auto tags = simulate(model, cfg);

        const auto channel_rates = channel_singles_rates(model);
        for (int c = 0; c < tags.n_channels(); ++c) {
            const double expected = channel_rates[c] * cfg.duration_s;
            CHECK_THAT(static_cast<double>(tags.channel(c).size()),
                       WithinAbs(expected, 4.0 * std::sqrt(expected)));
        }

        const auto rates = analytic_link_rates(model, cfg.window_ps);
        for (const auto& l : model.topology.links) {
            const auto& r = rates.at({l.user_a, l.user_b});
            const double expected = (r.true_coincidence + r.accidental) * cfg.duration_s;
            const double observed =
                matched_coincidences(tags, model.topology, l, cfg.window_ps);
            CHECK_THAT(observed, WithinAbs(expected, 4.0 * std::sqrt(expected)));
        }
    }
}

TEST_CASE("same-splitter pairs sit at the accidental floor") {
    auto model = small_model(1e5, 0.9, 0.5, 0.9, 400.0, 150.0);
    SimConfig cfg;
    cfg.duration_s = 1.0;
    cfg.seed = 314;
    cfg.window_ps = 2000;
    cfg.schedule = make_split_schedule(6, 1'000'000'000'000LL);
    const auto tags = simulate(model, cfg);

    for (const auto& sp : model.topology.splitters) {
        const int u = sp.output_users[0], v = sp.output_users[1];
        const double expected = accidental_rate(model, u, v, cfg.window_ps) * cfg.duration_s;
        const double observed =
            delayed_coincidence_rate(tags, model.topology, u, v, cfg.window_ps, 0) *
            cfg.duration_s;
        CHECK_THAT(observed, WithinAbs(expected, 4.0 * std::sqrt(expected) + 2.0));
    }
}

TEST_CASE("zero pair rate and zero dark give empty output") {
    auto model = small_model(0.0, 1.0, 0.5, 1.0, 0.0, 0.0);
    SimConfig cfg;
    cfg.duration_s = 0.1;
    cfg.seed = 1;
    cfg.schedule = make_split_schedule(6, 100'000'000'000LL);
    CHECK(simulate(model, cfg).total_tags() == 0);

    const auto rates = analytic_link_rates(model, 2000);
    for (const auto& [key, r] : rates) {
        CHECK(r.true_coincidence == 0.0);
        CHECK(r.accidental == 0.0);
        CHECK(r.singles_a == 0.0);
    }
}

TEST_CASE("analytic per-basis rates sum to true plus accidental") {
    auto model = small_model(7e4, 0.83, 0.45, 0.85, 250.0, 100.0);
    const auto rates = analytic_link_rates(model, 2000);
    for (const auto& [key, r] : rates) {
        for (int basis = 0; basis < 2; ++basis) {
            double sum = 0.0;
            for (int o = 0; o < 4; ++o) sum += r.basis_rates[4 * basis + o];
            CHECK_THAT(sum, WithinRel(r.true_coincidence + r.accidental, 1e-12));
        }
    }
}

TEST_CASE("pump power scan reproduces the profile slopes") {
    const auto rows = scan_power(profile_t39_7(), {1.0, 2.0, 3.0, 4.0, 5.0});
    REQUIRE(rows.size() == 5);

    // Least-squares slopes over the table.
    double sx = 0, sy = 0, sxy = 0, sxx = 0, ss = 0, sxs = 0;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        sx += r.power_mw;
        sy += r.coincidence_rate;
        sxy += r.power_mw * r.coincidence_rate;
        sxx += r.power_mw * r.power_mw;
        ss += r.s_param;
        sxs += r.power_mw * r.s_param;
    }
    const double rate_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double s_slope = (n * sxs - sx * ss) / (n * sxx - sx * sx);
    CHECK_THAT(rate_slope, WithinRel(0.056e6, 1e-9));
    CHECK_THAT(s_slope, WithinAbs(-0.085, 1e-9));

    const auto cold = scan_power(profile_t37_7(), {2.1});
    CHECK_THAT(cold[0].coincidence_rate, WithinRel(8.61e4, 1e-9));
    CHECK(cold[0].s_param >= 2.6);

    CHECK_THROWS_AS(scan_power(profile_t39_7(), {}), config_error);
    CHECK_THROWS_AS(scan_power(profile_t39_7(), {-1.0}), config_error);
}
