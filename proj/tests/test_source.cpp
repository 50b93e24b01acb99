#include "ringqkd/source.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace ringqkd;
using Catch::Approx;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("built-in profiles carry the characterised numbers") {
    const auto hot = profile_by_name("T39.7");
    CHECK(hot.ring_diameter_mm == 4.95);
    CHECK(hot.pair_rate_slope_mhz_per_mw == 0.056);
    CHECK(hot.s_slope_per_mw == 0.085);
    CHECK(hot.s_ref == 2.63);
    CHECK(hot.p_ref_mw == 1.0);

    const auto cold = profile_by_name("T37.7");
    CHECK(cold.ring_diameter_mm == 6.55);
    CHECK(cold.pair_rate_slope_mhz_per_mw == 0.041);
    CHECK(cold.s_ref >= 2.6);

    CHECK_THROWS_AS(profile_by_name("T99"), config_error);
}

TEST_CASE("pair rate is the ring rate split over K sources") {
    SourceParams p{1.0, profile_t39_7(), make_sections(1)};
    CHECK_THAT(pair_rate(p), WithinRel(5.6e4, 1e-12));

    p.profile = profile_t37_7();
    p.pump_mw = 2.1;
    CHECK_THAT(pair_rate(p), WithinRel(8.61e4, 1e-9));  // ~83 kHz row

    p.pump_mw = 0.0;
    CHECK(pair_rate(p) == 0.0);

    SECTION("increasing K divides the per-source rate, total constant") {
        for (int k : {1, 2, 3, 5, 8}) {
            SourceParams pk{1.7, profile_t39_7(), make_sections(k)};
            CHECK_THAT(pair_rate(pk) * k, WithinAbs(ring_pair_rate(pk.profile, 1.7), 1e-12));
        }
    }
}

TEST_CASE("bell parameter vs pump power") {
    SourceParams p{1.0, profile_t39_7(), make_sections(3)};
    CHECK_THAT(bell_s_vs_power(p), WithinAbs(2.63, 1e-12));

    p.pump_mw = 2.0;
    CHECK_THAT(bell_s_vs_power(p), WithinAbs(2.545, 1e-12));

    SourceParams cold{2.1, profile_t37_7(), make_sections(3)};
    CHECK(bell_s_vs_power(cold) >= 2.6);

    SECTION("non-increasing in P, never above the quantum bound") {
        double prev = kTsirelson + 1.0;
        for (double pw = 0.0; pw < 40.0; pw += 0.5) {
            SourceParams q{pw, profile_t39_7(), make_sections(3)};
            const double s = bell_s_vs_power(q);
            CHECK(s <= kTsirelson);
            CHECK(s <= prev);
            CHECK(s >= 0.0);
            prev = s;
        }
    }
}

TEST_CASE("ring diameter interpolates between the two profiles") {
    CHECK_THAT(ring_diameter(39.7), WithinAbs(4.95, 1e-12));
    CHECK_THAT(ring_diameter(37.7), WithinAbs(6.55, 1e-12));
    CHECK_THAT(ring_diameter(38.7), WithinAbs(5.75, 1e-12));
    CHECK_THROWS_AS(ring_diameter(36.0), std::domain_error);
    CHECK_THROWS_AS(ring_diameter(41.0), std::domain_error);
}

TEST_CASE("section layout geometry") {
    const auto layout = make_sections(3);
    REQUIRE(layout.sections.size() == 6);
    CHECK(layout.sections[0].label == "1");
    CHECK(layout.sections[3].label == "1'");
    CHECK(layout.sections[layout.partner(0)].label == "1'");
    CHECK(layout.sections[layout.partner(5)].label == "3");

    SECTION("partner is an involution") {
        for (int i = 0; i < 6; ++i) CHECK(layout.partner(layout.partner(i)) == i);
    }

    SECTION("arcs cover the ring, partners offset by 180") {
        double total = 0.0;
        for (const auto& s : layout.sections) total += s.arc_span_deg;
        CHECK_THAT(total, WithinAbs(360.0, 1e-9));
        for (int i = 0; i < 6; ++i) {
            const double off = std::fmod(layout.sections[layout.partner(i)].arc_start_deg -
                                             layout.sections[i].arc_start_deg + 720.0,
                                         360.0);
            CHECK_THAT(off, WithinAbs(180.0, 1e-9));
        }
    }

    SECTION("K=1 gives two half-ring partners") {
        const auto half = make_sections(1);
        CHECK(half.sections.size() == 2);
        CHECK(half.sections[0].arc_span_deg == 180.0);
        CHECK(half.partner(0) == 1);
    }

    CHECK_THROWS_AS(make_sections(0), config_error);
    CHECK_THROWS_AS(make_sections(3, std::vector<double>{0.1, 0.2}), config_error);
    CHECK_THROWS_AS(make_sections(1, std::vector<double>{0.5, 1.5}), config_error);
}

TEST_CASE("section singles rates") {
    // Couplings tuned so singles at the fitted pump level span the
    // characterised 1.3-2.0e6 band.
    const std::vector<double> eff = {0.35, 0.32, 0.40, 0.33, 0.36, 0.30};
    SourceParams p{230.0, profile_t39_7(), make_sections(3, eff)};
    for (int i = 0; i < 6; ++i) {
        const double s = section_singles_rate(p.layout, p, i);
        CHECK(s >= 1.2e6);
        CHECK(s <= 2.0e6);
    }

    SECTION("zero coupling gives zero singles") {
        auto layout = make_sections(3);
        layout.sections[2].coupling_efficiency = 1e-12;
        SourceParams q{1.0, profile_t39_7(), layout};
        CHECK(section_singles_rate(layout, q, 2) == Approx(0.0).margin(1e-3));
    }

    SECTION("homogeneous of degree one in pump power") {
        for (double pw : {0.5, 1.0, 2.0, 3.5, 7.0}) {
            SourceParams q{pw, profile_t39_7(), make_sections(3)};
            SourceParams q2{2.0 * pw, profile_t39_7(), make_sections(3)};
            for (int i = 0; i < 6; ++i)
                CHECK_THAT(section_singles_rate(q2.layout, q2, i),
                           WithinRel(2.0 * section_singles_rate(q.layout, q, i), 1e-12));
            if (pw > 0.0) CHECK_THAT(pair_rate(q2), WithinRel(2.0 * pair_rate(q), 1e-12));
        }
    }

    CHECK_THROWS_AS(section_singles_rate(p.layout, p, 6), std::out_of_range);
    CHECK_THROWS_AS(section_singles_rate(p.layout, p, -1), std::out_of_range);
}
