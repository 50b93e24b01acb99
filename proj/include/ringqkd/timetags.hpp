#pragma once

// Per-channel detection timestamp streams and their file formats.
//
// CSV:    header "channel,time_ps", one row per tag, globally time-sorted.
// Binary: 16-byte header (magic "RQKDTAG1", u32 version, u32 channel count),
//         then little-endian (u16 channel, i64 time_ps) records, time-sorted.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ringqkd/common.hpp"

namespace ringqkd {

static_assert(std::endian::native == std::endian::little,
              "binary tag format is little-endian; add byte swapping for this host");

struct TagSetMeta {
    std::int64_t duration_ps = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Immutable-after-finalize collection of sorted timestamp streams, one per
/// detector channel (user PBS port). Timestamps are integer picoseconds.
class TimeTagSet {
public:
    TimeTagSet() = default;
    explicit TimeTagSet(int n_channels, TagSetMeta meta = {})
        : channels_(n_channels), meta_(meta) {}

    int n_channels() const { return static_cast<int>(channels_.size()); }
    const TagSetMeta& meta() const { return meta_; }
    TagSetMeta& meta() { return meta_; }

    std::span<const std::int64_t> channel(int id) const {
        return channels_.at(id);
    }

    std::vector<std::int64_t>& mutable_channel(int id) { return channels_.at(id); }

    std::size_t total_tags() const {
        std::size_t n = 0;
        for (const auto& c : channels_) n += c.size();
        return n;
    }

    /// Sort every channel, drop duplicate (channel, time) tags and anything
    /// outside [0, duration]. Must be called once after filling.
    void finalize() {
        for (auto& c : channels_) {
            std::sort(c.begin(), c.end());
            c.erase(std::unique(c.begin(), c.end()), c.end());
            if (meta_.duration_ps > 0) {
                c.erase(std::remove_if(c.begin(), c.end(),
                                       [&](std::int64_t t) {
                                           return t < 0 || t > meta_.duration_ps;
                                       }),
                        c.end());
            }
        }
    }

    void check_sorted() const {
        for (int i = 0; i < n_channels(); ++i)
            if (!std::is_sorted(channels_[i].begin(), channels_[i].end()))
                throw data_error("time tags: channel " + std::to_string(i) + " is not sorted");
    }

private:
    std::vector<std::vector<std::int64_t>> channels_;
    TagSetMeta meta_;
};

namespace detail {

struct MergedTag {
    std::int64_t time;
    std::uint16_t channel;
};

inline std::vector<MergedTag> merged_time_order(const TimeTagSet& tags) {
    std::vector<MergedTag> all;
    all.reserve(tags.total_tags());
    for (int c = 0; c < tags.n_channels(); ++c)
        for (std::int64_t t : tags.channel(c))
            all.push_back({t, static_cast<std::uint16_t>(c)});
    std::sort(all.begin(), all.end(), [](const MergedTag& a, const MergedTag& b) {
        return std::tie(a.time, a.channel) < std::tie(b.time, b.channel);
    });
    return all;
}

}  // namespace detail

inline void write_tags_csv(const TimeTagSet& tags, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open \"" + path + "\" for writing");
    out << "channel,time_ps\n";
    for (const auto& tag : detail::merged_time_order(tags))
        out << tag.channel << ',' << tag.time << '\n';
    if (!out) throw data_error("write error on \"" + path + "\"");
}

inline TimeTagSet read_tags_csv(const std::string& path, int n_channels,
                                TagSetMeta meta = {}) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open \"" + path + "\"");
    std::string line;
    if (!std::getline(in, line) || line != "channel,time_ps")
        throw data_error(path + ": missing \"channel,time_ps\" header");
    TimeTagSet tags(n_channels, meta);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        std::size_t used_a = 0, used_b = 0;
        int channel = -1;
        std::int64_t t = 0;
        try {
            if (comma == std::string::npos) throw std::invalid_argument("no comma");
            channel = std::stoi(line.substr(0, comma), &used_a);
            t = std::stoll(line.substr(comma + 1), &used_b);
        } catch (const std::exception&) {
            throw data_error(path + ":" + std::to_string(line_no) + ": malformed row \"" +
                             line + "\"");
        }
        if (used_a != comma || comma + 1 + used_b != line.size())
            throw data_error(path + ":" + std::to_string(line_no) + ": trailing junk in \"" +
                             line + "\"");
        if (channel < 0 || channel >= n_channels)
            throw data_error(path + ":" + std::to_string(line_no) + ": channel " +
                             std::to_string(channel) + " out of range");
        tags.mutable_channel(channel).push_back(t);
    }
    tags.check_sorted();
    return tags;
}

inline constexpr char kTagMagic[8] = {'R', 'Q', 'K', 'D', 'T', 'A', 'G', '1'};
inline constexpr std::uint32_t kTagFormatVersion = 1;

inline void write_tags_binary(const TimeTagSet& tags, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open \"" + path + "\" for writing");
    char header[16] = {};
    std::memcpy(header, kTagMagic, 8);
    const std::uint32_t version = kTagFormatVersion;
    const std::uint32_t n_channels = static_cast<std::uint32_t>(tags.n_channels());
    std::memcpy(header + 8, &version, 4);
    std::memcpy(header + 12, &n_channels, 4);
    out.write(header, 16);
    for (const auto& tag : detail::merged_time_order(tags)) {
        char rec[10];
        std::memcpy(rec, &tag.channel, 2);
        std::memcpy(rec + 2, &tag.time, 8);
        out.write(rec, 10);
    }
    if (!out) throw data_error("write error on \"" + path + "\"");
}

inline TimeTagSet read_tags_binary(const std::string& path, TagSetMeta meta = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open \"" + path + "\"");
    char header[16];
    if (!in.read(header, 16)) throw data_error(path + ": truncated header");
    if (std::memcmp(header, kTagMagic, 8) != 0)
        throw data_error(path + ": bad magic, not a tag file");
    std::uint32_t version = 0, n_channels = 0;
    std::memcpy(&version, header + 8, 4);
    std::memcpy(&n_channels, header + 12, 4);
    if (version != kTagFormatVersion)
        throw data_error(path + ": unsupported format version " + std::to_string(version));
    TimeTagSet tags(static_cast<int>(n_channels), meta);
    char rec[10];
    while (in.read(rec, 10)) {
        std::uint16_t channel;
        std::int64_t t;
        std::memcpy(&channel, rec, 2);
        std::memcpy(&t, rec + 2, 8);
        if (channel >= n_channels)
            throw data_error(path + ": channel " + std::to_string(channel) + " out of range");
        tags.mutable_channel(channel).push_back(t);
    }
    if (in.gcount() != 0) throw data_error(path + ": truncated record at end of file");
    tags.check_sorted();
    return tags;
}

}  // namespace ringqkd
