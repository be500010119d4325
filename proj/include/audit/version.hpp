#pragma once

// Firmware revision parsing and constraint matching.
//
// Device banners carry dotted numeric revisions ("2.80", "V 3.3.12", "v2.70").
// Advisories state applicability as LT/LE/EQ comparisons against a pattern that
// may contain a single wildcard segment ("3.X.16" covers every 3.* branch).

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace audit {

class MalformedVersion : public std::runtime_error {
public:
    explicit MalformedVersion(const std::string& msg) : std::runtime_error(msg) {}
};

struct Version {
    std::vector<std::uint32_t> segments;
    std::string raw;  // original text, kept for display

    friend bool operator==(const Version& a, const Version& b) {
        return a.segments == b.segments;
    }
};

// Accepts "2.80", "v2.80", "V 3.3.12". A leading v/V (with at most one
// following space) is stripped; every remaining dot-separated segment must be
// a decimal integer.
inline Version parse_version(std::string_view text) {
    std::string_view rest = text;
    if (!rest.empty() && (rest.front() == 'v' || rest.front() == 'V')) {
        rest.remove_prefix(1);
        if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    }
    if (rest.empty())
        throw MalformedVersion("empty version string: \"" + std::string(text) + "\"");

    Version out;
    out.raw.assign(text);
    std::size_t pos = 0;
    while (true) {
        std::size_t dot = rest.find('.', pos);
        std::string_view seg =
            rest.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
        std::uint32_t value = 0;
        auto [ptr, ec] = std::from_chars(seg.data(), seg.data() + seg.size(), value);
        if (seg.empty() || ec != std::errc{} || ptr != seg.data() + seg.size())
            throw MalformedVersion("non-numeric segment \"" + std::string(seg) + "\" in version \"" +
                                   std::string(text) + "\"");
        out.segments.push_back(value);
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
    }
    return out;
}

inline std::string render_version(const Version& v) {
    std::string out;
    for (std::size_t i = 0; i < v.segments.size(); ++i) {
        if (i) out.push_back('.');
        out += std::to_string(v.segments[i]);
    }
    return out;
}

enum class VersionOp { lt, le, eq };

inline std::string to_string(VersionOp op) {
    switch (op) {
        case VersionOp::lt: return "lt";
        case VersionOp::le: return "le";
        case VersionOp::eq: return "eq";
    }
    return "?";
}

/// Constraint pattern: dotted segments, each either an integer or the wildcard
/// "X". At most one wildcard, never in the final position.
struct VersionConstraint {
    VersionOp op = VersionOp::lt;
    std::vector<std::optional<std::uint32_t>> pattern;  // nullopt == wildcard
    std::string raw;
};

inline VersionOp parse_version_op(std::string_view text) {
    if (text == "lt") return VersionOp::lt;
    if (text == "le") return VersionOp::le;
    if (text == "eq") return VersionOp::eq;
    throw MalformedVersion("unknown version comparison \"" + std::string(text) + "\"");
}

inline VersionConstraint parse_version_constraint(VersionOp op, std::string_view pattern_text) {
    VersionConstraint out;
    out.op = op;
    out.raw.assign(pattern_text);
    if (pattern_text.empty()) throw MalformedVersion("empty version pattern");

    std::size_t pos = 0;
    while (true) {
        std::size_t dot = pattern_text.find('.', pos);
        std::string_view seg = pattern_text.substr(
            pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
        if (seg == "X" || seg == "x") {
            out.pattern.push_back(std::nullopt);
        } else {
            std::uint32_t value = 0;
            auto [ptr, ec] = std::from_chars(seg.data(), seg.data() + seg.size(), value);
            if (seg.empty() || ec != std::errc{} || ptr != seg.data() + seg.size())
                throw MalformedVersion("bad pattern segment \"" + std::string(seg) + "\" in \"" +
                                       std::string(pattern_text) + "\"");
            out.pattern.push_back(value);
        }
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
    }

    std::size_t wildcards = static_cast<std::size_t>(
        std::count(out.pattern.begin(), out.pattern.end(), std::optional<std::uint32_t>{}));
    if (wildcards > 1)
        throw MalformedVersion("more than one wildcard in pattern \"" + std::string(pattern_text) + "\"");
    if (wildcards == 1 && !out.pattern.back().has_value())
        throw MalformedVersion("wildcard may not be the final segment: \"" +
                               std::string(pattern_text) + "\"");
    return out;
}

namespace detail {

inline bool apply_version_op(VersionOp op, int cmp) {
    switch (op) {
        case VersionOp::lt: return cmp < 0;
        case VersionOp::le: return cmp <= 0;
        case VersionOp::eq: return cmp == 0;
    }
    return false;
}

}  // namespace detail

// True when `v` satisfies `c`.
//
// Without a wildcard both sides are zero-padded to a common length and compared
// lexicographically ([3,10] == [3,10,0]). With a wildcard the comparison is
// anchored: segments before the wildcard must match exactly, the wildcard
// position is skipped, and the op applies to the remaining tail. So LT "3.X.16"
// holds iff v[0]==3 and v[2]<16 (v padded to pattern length); a 2.x revision is
// outside the pattern's branch and never matches.
inline bool compare_version(const Version& v, const VersionConstraint& c) {
    auto vseg = [&](std::size_t i) -> std::uint32_t {
        return i < v.segments.size() ? v.segments[i] : 0u;
    };
    const auto& pat = c.pattern;
    std::size_t n = std::max(v.segments.size(), pat.size());

    std::size_t wild = pat.size();
    for (std::size_t i = 0; i < pat.size(); ++i)
        if (!pat[i].has_value()) wild = i;

    std::size_t tail_start = 0;
    if (wild != pat.size()) {
        for (std::size_t i = 0; i < wild; ++i)
            if (vseg(i) != *pat[i]) return false;
        tail_start = wild + 1;
    }

    int cmp = 0;
    for (std::size_t i = tail_start; i < n && cmp == 0; ++i) {
        std::uint32_t ps = i < pat.size() && pat[i].has_value() ? *pat[i] : 0u;
        if (vseg(i) != ps) cmp = vseg(i) < ps ? -1 : 1;
    }
    return detail::apply_version_op(c.op, cmp);
}

}  // namespace audit
