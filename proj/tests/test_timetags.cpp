#include "ringqkd/timetags.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace ringqkd;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

TimeTagSet random_tags(std::uint64_t seed, int n_channels, int per_channel) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> t(0, 999'999'999'999);
    TimeTagSet tags(n_channels, {1'000'000'000'000, seed, "deadbeef"});
    for (int c = 0; c < n_channels; ++c)
        for (int i = 0; i < per_channel; ++i) tags.mutable_channel(c).push_back(t(rng));
    tags.finalize();
    return tags;
}

bool equal(const TimeTagSet& a, const TimeTagSet& b) {
    if (a.n_channels() != b.n_channels()) return false;
    for (int c = 0; c < a.n_channels(); ++c) {
        const auto sa = a.channel(c), sb = b.channel(c);
        if (!std::equal(sa.begin(), sa.end(), sb.begin(), sb.end())) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("finalize sorts, dedupes and clips to the run window") {
    TimeTagSet tags(2, {1000, 0, ""});
    tags.mutable_channel(0) = {500, 100, 100, -3, 900, 1200};
    tags.mutable_channel(1) = {7};
    tags.finalize();
    REQUIRE(tags.channel(0).size() == 3);
    CHECK(tags.channel(0)[0] == 100);
    CHECK(tags.channel(0)[1] == 500);
    CHECK(tags.channel(0)[2] == 900);
    CHECK(tags.total_tags() == 4);
    CHECK_NOTHROW(tags.check_sorted());
}

TEST_CASE("csv round trip is exact") {
    const auto tags = random_tags(41, 4, 500);
    const auto path = temp_path("ringqkd_tags_test.csv");
    write_tags_csv(tags, path);
    const auto back = read_tags_csv(path, 4, tags.meta());
    CHECK(equal(tags, back));
    std::remove(path.c_str());
}

TEST_CASE("binary round trip is exact") {
    const auto tags = random_tags(42, 12, 2000);
    const auto path = temp_path("ringqkd_tags_test.bin");
    write_tags_binary(tags, path);
    const auto back = read_tags_binary(path, tags.meta());
    CHECK(back.n_channels() == 12);
    CHECK(equal(tags, back));
    std::remove(path.c_str());
}

TEST_CASE("csv reader rejects malformed input with a line number") {
    const auto path = temp_path("ringqkd_tags_bad.csv");

    SECTION("bad header") {
        std::ofstream(path) << "time,channel\n0,1\n";
        CHECK_THROWS_AS(read_tags_csv(path, 2), data_error);
    }

    SECTION("corrupt row mentions its line") {
        std::ofstream(path) << "channel,time_ps\n0,123\n1,not_a_number\n";
        try {
            read_tags_csv(path, 2);
            FAIL("expected data_error");
        } catch (const data_error& e) {
            CHECK(std::string(e.what()).find(":3") != std::string::npos);
        }
    }

    SECTION("channel out of range") {
        std::ofstream(path) << "channel,time_ps\n9,123\n";
        CHECK_THROWS_AS(read_tags_csv(path, 2), data_error);
    }

    SECTION("unsorted channel stream") {
        std::ofstream(path) << "channel,time_ps\n0,500\n0,100\n";
        CHECK_THROWS_AS(read_tags_csv(path, 2), data_error);
    }

    std::remove(path.c_str());
}

TEST_CASE("binary reader rejects foreign and truncated files") {
    const auto path = temp_path("ringqkd_tags_bad.bin");

    SECTION("bad magic") {
        std::ofstream(path, std::ios::binary) << "NOTATAGFILE.....";
        CHECK_THROWS_AS(read_tags_binary(path), data_error);
    }

    SECTION("truncated record") {
        const auto tags = random_tags(7, 2, 3);
        write_tags_binary(tags, path);
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
        CHECK_THROWS_AS(read_tags_binary(path), data_error);
    }

    SECTION("missing file") {
        CHECK_THROWS_AS(read_tags_binary(temp_path("ringqkd_no_such_file.bin")), data_error);
    }

    std::remove(path.c_str());
}
