#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "audit/version.hpp"

using namespace audit;

namespace {

// Reference comparator, spelled out longhand against the documented contract:
// zero-pad both sides, require exact equality left of the wildcard, skip the
// wildcard position, and order whatever remains lexicographically.
bool reference_match(const Version& v, const VersionConstraint& c) {
    std::size_t len = std::max(v.segments.size(), c.pattern.size());
    auto vseg = [&](std::size_t i) { return i < v.segments.size() ? v.segments[i] : 0u; };
    auto pseg = [&](std::size_t i) {
        return i < c.pattern.size() && c.pattern[i] ? *c.pattern[i] : 0u;
    };

    std::size_t wild = c.pattern.size();
    for (std::size_t i = 0; i < c.pattern.size(); ++i)
        if (!c.pattern[i]) wild = i;

    std::size_t from = 0;
    if (wild != c.pattern.size()) {
        for (std::size_t i = 0; i < wild; ++i)
            if (vseg(i) != pseg(i)) return false;
        from = wild + 1;
    }

    int cmp = 0;
    for (std::size_t i = from; i < len; ++i) {
        if (vseg(i) == pseg(i)) continue;
        cmp = vseg(i) < pseg(i) ? -1 : 1;
        break;
    }
    switch (c.op) {
        case VersionOp::lt: return cmp < 0;
        case VersionOp::le: return cmp <= 0;
        case VersionOp::eq: return cmp == 0;
    }
    return false;
}

std::string join_dotted(const std::vector<std::uint32_t>& segs) {
    std::string out;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (i) out.push_back('.');
        out += std::to_string(segs[i]);
    }
    return out;
}

}  // namespace

TEST_CASE("parse_version handles the banner forms seen in the wild", "[version]") {
    CHECK(parse_version("2.80").segments == std::vector<std::uint32_t>{2, 80});
    CHECK(parse_version("v2.70").segments == std::vector<std::uint32_t>{2, 70});
    CHECK(parse_version("V 3.3.12").segments == std::vector<std::uint32_t>{3, 3, 12});
    CHECK(parse_version("V2.1").segments == std::vector<std::uint32_t>{2, 1});
    CHECK(parse_version("16.00").segments == std::vector<std::uint32_t>{16, 0});
    CHECK(parse_version("0").segments == std::vector<std::uint32_t>{0});
    CHECK(parse_version("V 3.30").raw == "V 3.30");
}

TEST_CASE("parse_version rejects junk", "[version]") {
    CHECK_THROWS_AS(parse_version(""), MalformedVersion);
    CHECK_THROWS_AS(parse_version("v"), MalformedVersion);
    CHECK_THROWS_AS(parse_version("V "), MalformedVersion);
    CHECK_THROWS_AS(parse_version("V  3.3"), MalformedVersion);  // only one space after the prefix
    CHECK_THROWS_AS(parse_version("3..1"), MalformedVersion);
    CHECK_THROWS_AS(parse_version("3.1."), MalformedVersion);
    CHECK_THROWS_AS(parse_version("3.a"), MalformedVersion);
    CHECK_THROWS_AS(parse_version("firmware-x"), MalformedVersion);
    CHECK_THROWS_AS(parse_version("3.1-rc1"), MalformedVersion);
}

TEST_CASE("parse_version round-trips through render_version", "[version]") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> depth(1, 4);
    std::uniform_int_distribution<std::uint32_t> seg(0, 9999);
    for (int i = 0; i < 500; ++i) {
        std::vector<std::uint32_t> segs;
        int d = depth(rng);
        for (int k = 0; k < d; ++k) segs.push_back(seg(rng));
        std::string text = join_dotted(segs);
        Version v = parse_version(text);
        CHECK(v.segments == segs);
        CHECK(render_version(v) == text);
    }
}

TEST_CASE("parse_version_op accepts exactly lt/le/eq", "[version]") {
    CHECK(parse_version_op("lt") == VersionOp::lt);
    CHECK(parse_version_op("le") == VersionOp::le);
    CHECK(parse_version_op("eq") == VersionOp::eq);
    CHECK_THROWS_AS(parse_version_op("gt"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_op("LT"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_op(""), MalformedVersion);
}

TEST_CASE("constraint parsing enforces wildcard placement", "[version]") {
    auto c = parse_version_constraint(VersionOp::lt, "3.X.16");
    REQUIRE(c.pattern.size() == 3);
    CHECK(c.pattern[0] == 3u);
    CHECK_FALSE(c.pattern[1].has_value());
    CHECK(c.pattern[2] == 16u);

    CHECK_FALSE(parse_version_constraint(VersionOp::eq, "3.x.16").pattern[1].has_value());

    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, "3.X"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, "X"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, "X.X.1"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, "3.Y.16"), MalformedVersion);
    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, ""), MalformedVersion);
    CHECK_THROWS_AS(parse_version_constraint(VersionOp::lt, "3..16"), MalformedVersion);
}

TEST_CASE("plain comparisons zero-pad to a common length", "[version]") {
    auto lt = [](const char* v, const char* p) {
        return compare_version(parse_version(v), parse_version_constraint(VersionOp::lt, p));
    };
    auto eq = [](const char* v, const char* p) {
        return compare_version(parse_version(v), parse_version_constraint(VersionOp::eq, p));
    };
    auto le = [](const char* v, const char* p) {
        return compare_version(parse_version(v), parse_version_constraint(VersionOp::le, p));
    };

    CHECK(eq("3.10", "3.10.0"));
    CHECK(eq("3.10.0", "3.10"));
    CHECK(lt("2.80", "3.10"));
    CHECK_FALSE(lt("3.10", "3.10"));
    CHECK(le("3.10", "3.10"));
    CHECK(lt("3.9.9", "3.10"));   // segment order, not string order
    CHECK_FALSE(lt("15.1", "15.001"));  // 001 parses as 1
    CHECK(le("15.001", "15.1"));
    CHECK(lt("15.0", "15.001"));
    CHECK_FALSE(le("16.01", "16.00"));
}

TEST_CASE("wildcard comparisons anchor the prefix", "[version]") {
    auto match = [](const char* v, VersionOp op, const char* p) {
        return compare_version(parse_version(v), parse_version_constraint(op, p));
    };

    // Inside the 3.* branch the op applies to the tail after the wildcard.
    CHECK(match("3.3.12", VersionOp::lt, "3.X.16"));
    CHECK(match("3.0.0", VersionOp::lt, "3.X.16"));
    CHECK_FALSE(match("3.5.16", VersionOp::lt, "3.X.16"));
    CHECK(match("3.5.16", VersionOp::le, "3.X.16"));
    CHECK(match("3.9.16", VersionOp::eq, "3.X.16"));
    CHECK_FALSE(match("3.9.17", VersionOp::eq, "3.X.16"));

    // Outside the branch nothing matches, not even "less than".
    CHECK_FALSE(match("2.9.0", VersionOp::lt, "3.X.16"));
    CHECK_FALSE(match("4.0.0", VersionOp::lt, "3.X.16"));

    // A short version pads with zeros both in the prefix and the tail.
    CHECK(match("3", VersionOp::lt, "3.X.16"));
    CHECK(match("3.7", VersionOp::lt, "3.X.16"));
    CHECK_FALSE(match("2", VersionOp::lt, "3.X.16"));
    CHECK(match("3.5", VersionOp::eq, "3.X.0"));
}

TEST_CASE("comparator agrees with the longhand reference on a dense grid", "[version]") {
    const std::vector<std::uint32_t> vseg = {0, 1, 2, 3, 10, 16, 17, 20};
    const std::vector<std::uint32_t> pseg = {0, 1, 3, 10, 16};
    const std::vector<std::uint32_t> dseg = {0, 3, 16};

    std::vector<Version> versions;
    for (auto a : vseg) versions.push_back(parse_version(std::to_string(a)));
    for (auto a : vseg)
        for (auto b : vseg)
            versions.push_back(parse_version(std::to_string(a) + "." + std::to_string(b)));
    for (auto a : dseg)
        for (auto b : dseg)
            for (auto c : dseg)
                versions.push_back(parse_version(std::to_string(a) + "." + std::to_string(b) +
                                                 "." + std::to_string(c)));

    std::vector<std::string> patterns;
    for (auto a : pseg) patterns.push_back(std::to_string(a));
    for (auto a : pseg)
        for (auto b : pseg) patterns.push_back(std::to_string(a) + "." + std::to_string(b));
    for (auto a : pseg)
        for (auto b : pseg)
            for (auto c : pseg)
                patterns.push_back(std::to_string(a) + "." + std::to_string(b) + "." +
                                   std::to_string(c));
    for (auto a : dseg)
        for (auto c : dseg) patterns.push_back(std::to_string(a) + ".X." + std::to_string(c));

    std::size_t checked = 0;
    for (const auto& ptext : patterns) {
        for (VersionOp op : {VersionOp::lt, VersionOp::le, VersionOp::eq}) {
            auto c = parse_version_constraint(op, ptext);
            for (const auto& v : versions) {
                bool got = compare_version(v, c);
                bool want = reference_match(v, c);
                if (got != want) {
                    CAPTURE(render_version(v), ptext, to_string(op));
                    REQUIRE(got == want);
                }
                ++checked;
            }
        }
    }
    CHECK(checked == versions.size() * patterns.size() * 3);
}
