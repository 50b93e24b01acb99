#include "ringqkd/topology.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace ringqkd;
using Catch::Matchers::WithinAbs;

namespace {

std::set<std::string> link_names(const Topology& t) {
    std::set<std::string> names;
    for (const auto& l : t.links) names.insert(t.link_name(l));
    return names;
}

std::map<std::string, int> degrees(const Topology& t) {
    std::map<std::string, int> d;
    for (const auto& l : t.links) {
        d[t.users[l.user_a].name]++;
        d[t.users[l.user_b].name]++;
    }
    return d;
}

// Edge-set equality under some user permutation (6 users -> 720 candidates).
bool isomorphic(const Topology& a, const Topology& b) {
    if (a.n_users() != b.n_users() || a.links.size() != b.links.size()) return false;
    std::vector<int> perm(a.n_users());
    std::iota(perm.begin(), perm.end(), 0);
    std::set<std::pair<int, int>> eb;
    for (const auto& l : b.links) eb.insert({l.user_a, l.user_b});
    do {
        bool ok = true;
        for (const auto& l : a.links) {
            int u = perm[l.user_a], v = perm[l.user_b];
            if (u > v) std::swap(u, v);
            if (!eb.count({u, v})) {
                ok = false;
                break;
            }
        }
        if (ok) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

}  // namespace

TEST_CASE("paper_n6 network shape") {
    const auto topo = build_paper_n6();
    REQUIRE(topo.links.size() == 12);
    CHECK(topo.n_users() == 6);
    CHECK(topo.n_sources() == 3);

    SECTION("every user has degree 4") {
        for (const auto& [name, d] : degrees(topo)) CHECK(d == 4);
    }

    SECTION("same-splitter pairs are not linked") {
        const auto names = link_names(topo);
        CHECK(!names.count("AB"));
        CHECK(!names.count("CD"));
        CHECK(!names.count("EF"));
    }

    SECTION("bell partition matches the measured table") {
        std::set<std::string> plus, minus;
        for (const auto& l : topo.links)
            (l.bell == BellKind::PhiPlus ? plus : minus).insert(topo.link_name(l));
        CHECK(plus == std::set<std::string>{"AC", "AF", "BC", "BF", "CE", "DE"});
        CHECK(minus == std::set<std::string>{"AD", "AE", "BD", "BE", "CF", "DF"});
    }

    SECTION("validates clean") {
        CHECK(validate(topo).empty());
    }

    SECTION("link sources follow the allocation table") {
        // A holds sections {1,2}, C holds {3,1'}; their shared source is I.
        CHECK(source_label(topo.link_by_name("AC").source) == "I");
        CHECK(source_label(topo.link_by_name("AE").source) == "II");
        CHECK(source_label(topo.link_by_name("CE").source) == "III");
    }
}

TEST_CASE("general builder: cyclic") {
    SECTION("N=4 gives 2 sources, 4 links, degree 2") {
        const auto t = build(4, Scheme::Cyclic);
        CHECK(t.n_sources() == 2);
        CHECK(t.links.size() == 4);
        for (const auto& [name, d] : degrees(t)) CHECK(d == 2);
        CHECK(validate(t).empty());  // 4 = N(N-2)/2, fully connected
    }

    SECTION("N=6 cyclic is isomorphic to the bench network") {
        const auto t = build(6, Scheme::Cyclic);
        CHECK(t.links.size() == 12);
        CHECK(isomorphic(t, build_paper_n6()));
    }

    SECTION("N=8 gives 16 links on 4 sources and flags connectivity") {
        const auto t = build(8, Scheme::Cyclic);
        CHECK(t.n_sources() == 4);
        CHECK(t.links.size() == 16);
        for (const auto& [name, d] : degrees(t)) CHECK(d == 4);
        const auto v = validate(t);
        REQUIRE(v.size() == 1);
        CHECK(v[0].find("incomplete connectivity: 16 of 24") != std::string::npos);
    }

    CHECK_THROWS_AS(build(5, Scheme::Cyclic), config_error);
    CHECK_THROWS_AS(build(2, Scheme::Cyclic), config_error);
}

TEST_CASE("general builder: complete") {
    SECTION("N=8 needs C(4,2)=6 sources for 24 links") {
        const auto t = build(8, Scheme::Complete);
        CHECK(t.n_sources() == 6);
        CHECK(t.links.size() == 24);
        for (const auto& [name, d] : degrees(t)) CHECK(d == 6);
        CHECK(validate(t).empty());
    }

    SECTION("N=6 complete is isomorphic to cyclic") {
        CHECK(isomorphic(build(6, Scheme::Complete), build(6, Scheme::Cyclic)));
    }

    SECTION("combiner routing probabilities include the input weight") {
        const auto t = build(8, Scheme::Complete);
        for (const auto& l : t.links) {
            CHECK_THAT(l.route_prob_a, WithinAbs(0.5 / 3.0, 1e-12));
            CHECK_THAT(l.route_prob_b, WithinAbs(0.5 / 3.0, 1e-12));
        }
    }
}

TEST_CASE("route probabilities propagate the splitter ratio") {
    BuildOptions opts;
    const auto even = build_paper_n6(opts);
    for (const auto& l : even.links) {
        CHECK(l.route_prob_a == 0.5);
        CHECK(l.route_prob_b == 0.5);
    }

    opts.splitter_t = 0.6;
    auto topo = build_paper_n6(opts);
    // Restore 50:50 everywhere but BS0 to isolate its effect.
    topo.splitters[1].transmit_ratio = 0.5;
    topo.splitters[2].transmit_ratio = 0.5;
    topo.links = link_graph(topo);

    // Section 1 enters BS0 input 0: A (output 0) transmits with 0.6.
    const auto& ac = topo.link_by_name("AC");
    CHECK_THAT(ac.route_prob_a, WithinAbs(0.6, 1e-12));
    CHECK_THAT(ac.route_prob_b, WithinAbs(0.5, 1e-12));
    const auto& bc = topo.link_by_name("BC");
    CHECK_THAT(bc.route_prob_a, WithinAbs(0.4, 1e-12));
    // Section 2 enters BS0 input 1: B (output 1) transmits with 0.6.
    const auto& ae = topo.link_by_name("AE");
    CHECK_THAT(ae.route_prob_a, WithinAbs(0.4, 1e-12));
    const auto& be = topo.link_by_name("BE");
    CHECK_THAT(be.route_prob_a, WithinAbs(0.6, 1e-12));
}

TEST_CASE("bell parity") {
    auto topo = build_paper_n6();

    SECTION("table entries win") {
        CHECK(bell_parity(topo, topo.link_by_name("AD")) == BellKind::PhiMinus);
        CHECK(bell_parity(topo, topo.link_by_name("AC")) == BellKind::PhiPlus);
    }

    SECTION("computed parity from reflection counts") {
        topo.parity_table.reset();
        for (auto& u : topo.users) u.path_reflections = 3;
        CHECK(bell_parity(topo, topo.links[0]) == BellKind::PhiMinus);  // equal counts

        SECTION("one extra mirror flips the kind; two restore it") {
            std::mt19937_64 rng(5);
            for (int trial = 0; trial < 10; ++trial) {
                for (auto& u : topo.users)
                    u.path_reflections = static_cast<int>(rng() % 7);
                for (const auto& l : topo.links) {
                    const auto base = bell_parity(topo, l);
                    topo.users[l.user_a].path_reflections += 1;
                    CHECK(bell_parity(topo, l) != base);
                    topo.users[l.user_b].path_reflections += 1;
                    CHECK(bell_parity(topo, l) == base);
                    topo.users[l.user_a].path_reflections -= 1;
                    topo.users[l.user_b].path_reflections -= 1;
                }
            }
        }
    }

    SECTION("unknown parity raises") {
        topo.parity_table.reset();
        CHECK_THROWS_AS(bell_parity(topo, topo.links[0]), data_error);
    }

    SECTION("table/reflection disagreement is a validation warning") {
        for (auto& u : topo.users) u.path_reflections = 0;  // computed: all PhiMinus
        const auto v = validate(topo);
        CHECK(std::count_if(v.begin(), v.end(), [](const std::string& s) {
                  return s.find("parity table overrides") != std::string::npos;
              }) == 6);
    }
}

TEST_CASE("validate flags broken wiring") {
    SECTION("both sections of one source on one splitter") {
        auto topo = build_paper_n6();
        topo.splitters[0].inputs = {{0, 1.0}, {3, 1.0}};  // sections 1 and 1'
        topo.splitters[1].inputs = {{2, 1.0}, {1, 1.0}};
        topo.links = link_graph(topo);
        const auto v = validate(topo);
        CHECK(std::any_of(v.begin(), v.end(), [](const std::string& s) {
            return s.find("source self-interference") != std::string::npos;
        }));
    }

    SECTION("dangling section") {
        auto topo = build_paper_n6();
        topo.splitters[0].inputs[1].section = 0;  // section 1 twice, section 2 unused
        const auto v = validate(topo);
        CHECK(!v.empty());
    }
}

TEST_CASE("splitter failure removes exactly the incident links") {
    for (auto scheme : {Scheme::Cyclic, Scheme::Complete}) {
        const auto topo = build(8, scheme);
        for (const auto& sp : topo.splitters) {
            const auto remaining = links_after_splitter_failure(topo, sp.id);
            std::set<std::pair<int, int>> kept;
            for (const auto& l : remaining) kept.insert({l.user_a, l.user_b});
            for (const auto& l : topo.links) {
                const bool incident =
                    l.user_a == sp.output_users[0] || l.user_a == sp.output_users[1] ||
                    l.user_b == sp.output_users[0] || l.user_b == sp.output_users[1];
                CHECK(kept.count({l.user_a, l.user_b}) == (incident ? 0u : 1u));
            }
        }
    }
}

TEST_CASE("dot output lists every link once") {
    const auto topo = build_paper_n6();
    const auto dot = to_dot(topo);
    CHECK(dot.find("A -- C") != std::string::npos);
    CHECK(dot.find("phi+") != std::string::npos);
    size_t edges = 0, pos = 0;
    while ((pos = dot.find(" -- ", pos)) != std::string::npos) {
        ++edges;
        pos += 4;
    }
    CHECK(edges == 12);
}
