#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "audit/rules.hpp"

using namespace audit;

namespace {

const std::filesystem::path kDataDir = AUDIT_BUNDLED_DATA_DIR;

std::map<DeviceFamily, RuleSet> bundled() { return load_rulesets(kDataDir / "rules"); }

DeviceProfile schneider_profile(std::optional<std::string> model,
                                std::optional<std::string> firmware,
                                std::vector<std::pair<Transport, std::uint16_t>> ports) {
    DeviceProfile p;
    p.family = DeviceFamily::schneider_bmx_p34;
    p.ip = "192.0.2.1";
    p.country_code = "FR";
    p.country_name = "France";
    p.open_ports = std::move(ports);
    p.model = std::move(model);
    if (firmware) {
        p.firmware_raw = firmware;
        p.firmware = parse_version(*firmware);
    }
    return p;
}

bool has_cve(const DeviceAssessment& a, std::string_view cve) {
    for (const auto& f : a.findings)
        if (f.cve_id == cve) return true;
    return false;
}

const Finding* find_cve(const DeviceAssessment& a, std::string_view cve) {
    for (const auto& f : a.findings)
        if (f.cve_id == cve) return &f;
    return nullptr;
}

}  // namespace

TEST_CASE("bundled rule files load and validate", "[rules]") {
    auto rs = bundled();
    REQUIRE(rs.size() == 5);
    CHECK(rs.at(DeviceFamily::schneider_bmx_p34).rules.size() == 59);
    CHECK(rs.at(DeviceFamily::schneider_bmx_p34).clusters.size() == 15);
    CHECK(rs.at(DeviceFamily::siemens_s7_300).rules.size() == 17);
    CHECK(rs.at(DeviceFamily::omron_cj_cs).rules.size() == 7);
    CHECK(rs.at(DeviceFamily::rockwell_micrologix_1400).rules.size() == 7);
    CHECK(rs.at(DeviceFamily::mitsubishi_melsec_q).rules.size() == 3);

    // Cluster order follows the file, not lexicographic id order.
    const auto& clusters = rs.at(DeviceFamily::schneider_bmx_p34).clusters;
    CHECK(clusters.front().id == "1");
    CHECK(clusters.back().id == "15");
}

TEST_CASE("score_used prefers v3.1 and falls back to v2", "[rules]") {
    auto rs = bundled();
    const RuleSet& schneider = rs.at(DeviceFamily::schneider_bmx_p34);
    const CveRule* both = schneider.find_rule("CVE-2018-7847");
    REQUIRE(both);
    CHECK(both->score_used() == 9.8);  // v3.1 wins over the 7.5 v2 value

    CveRule v2_only;
    v2_only.cvss_v2 = 7.1;
    CHECK(v2_only.score_used() == 7.1);

    const CveRule* starred = schneider.find_rule("CVE-2015-7937");
    REQUIRE(starred);
    CHECK(starred->v31_star);
    CHECK(starred->score_used() == 10.0);  // starred v3.1 scores still count
}

TEST_CASE("rule file validation rejects inconsistent documents", "[rules]") {
    auto parse = [](const std::string& body) {
        return parse_ruleset(ordered_json::parse(body));
    };
    const std::string head = R"({"family": "mitsubishi_melsec_q", "rules": [)";

    CHECK_THROWS_AS(parse(R"({"rules": []})"), SchemaError);
    CHECK_THROWS_AS(parse(R"({"family": "martian_plc", "rules": []})"), ValidationError);
    CHECK_THROWS_AS(parse(R"({"family": "mitsubishi_melsec_q", "rules": []})"), ValidationError);

    // duplicate cve id
    CHECK_THROWS_AS(
        parse(head +
              R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                  "condition": {"op": "always"}},
                 {"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                  "condition": {"op": "always"}}]})"),
        ValidationError);
    // score out of range
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 11.0, "stride": "D",
                              "certainty": "full", "condition": {"op": "always"}}]})"),
                    ValidationError);
    // no score at all
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "stride": "D", "certainty": "full",
                              "condition": {"op": "always"}}]})"),
                    ValidationError);
    // starred v3.1 without the score
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "v31_star": true, "stride": "D",
                              "certainty": "full", "condition": {"op": "always"}}]})"),
                    ValidationError);
    // stride letter outside STRIDE
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D/Q",
                              "certainty": "full", "condition": {"op": "always"}}]})"),
                    ValidationError);
    // unknown certainty
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D",
                              "certainty": "likely", "condition": {"op": "always"}}]})"),
                    ValidationError);
    // neither cluster nor condition
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D",
                              "certainty": "full"}]})"),
                    ValidationError);
    // clustered rule with its own condition
    CHECK_THROWS_AS(
        parse(head +
              R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                  "cluster": "1", "condition": {"op": "always"}}],
                  "clusters": {"1": {"condition": {"op": "always"}, "members": ["CVE-1"]}}})"),
        ValidationError);
    // rule referencing an undefined cluster
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D",
                              "certainty": "full", "cluster": "9"}]})"),
                    ValidationError);
    // cluster listing a cve that has no rule entry
    CHECK_THROWS_AS(
        parse(head +
              R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                  "cluster": "1"}],
                  "clusters": {"1": {"condition": {"op": "always"},
                                     "members": ["CVE-1", "CVE-GHOST"]}}})"),
        ValidationError);
    // cluster that fails to list a rule claiming membership
    CHECK_THROWS_AS(
        parse(R"({"family": "mitsubishi_melsec_q", "rules": [
                  {"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                   "cluster": "1"},
                  {"cve": "CVE-2", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                   "cluster": "1"}],
                  "clusters": {"1": {"condition": {"op": "always"}, "members": ["CVE-1"]}}})"),
        ValidationError);
    // unknown service in a condition
    CHECK_THROWS_AS(parse(head +
                          R"({"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
                              "condition": {"op": "service_present", "service": "gopher"}}]})"),
                    ValidationError);
}

TEST_CASE("condition trees deeper than the limit are rejected", "[rules]") {
    std::string cond = R"({"op": "always"})";
    for (int i = 0; i < 8; ++i) cond = R"({"op": "and", "terms": [)" + cond + "]}";
    std::string body = R"({"family": "mitsubishi_melsec_q", "rules": [
        {"cve": "CVE-1", "cvss_v2": 5.0, "stride": "D", "certainty": "full",
         "condition": )" + cond + "}]}";
    CHECK_THROWS_AS(parse_ruleset(ordered_json::parse(body)), ValidationError);
}

TEST_CASE("three-valued evaluation: absent firmware is indeterminate", "[rules]") {
    Condition fw;
    fw.kind = Condition::Kind::firmware_satisfies;
    fw.constraint = parse_version_constraint(VersionOp::lt, "3.10");

    auto with_fw = schneider_profile("BMX P34 2020", "V 2.80", {{Transport::tcp, 502}});
    auto no_fw = schneider_profile("BMX P34 2020", std::nullopt, {{Transport::tcp, 502}});
    auto new_fw = schneider_profile("BMX P34 2020", "V 3.30", {{Transport::tcp, 502}});

    CHECK(evaluate_condition(fw, with_fw) == MatchOutcome::match);
    CHECK(evaluate_condition(fw, no_fw) == MatchOutcome::indeterminate);
    CHECK(evaluate_condition(fw, new_fw) == MatchOutcome::no_match);

    // model_in on an absent model is a miss, not indeterminate.
    Condition mi;
    mi.kind = Condition::Kind::model_in;
    mi.models = {"P34 2020"};
    auto no_model = schneider_profile(std::nullopt, "V 2.80", {{Transport::tcp, 502}});
    CHECK(evaluate_condition(mi, no_model) == MatchOutcome::no_match);
}

TEST_CASE("and/or combine three-valued outcomes correctly", "[rules]") {
    Condition yes;  // port matches
    yes.kind = Condition::Kind::port_open;
    yes.transport = Transport::tcp;
    yes.port = 502;
    Condition no;
    no.kind = Condition::Kind::port_open;
    no.transport = Transport::tcp;
    no.port = 8080;
    Condition maybe;
    maybe.kind = Condition::Kind::firmware_satisfies;
    maybe.constraint = parse_version_constraint(VersionOp::lt, "3.10");

    auto p = schneider_profile("BMX P34 2020", std::nullopt, {{Transport::tcp, 502}});
    auto combine = [&](Condition::Kind k, std::vector<Condition> terms) {
        Condition c;
        c.kind = k;
        c.terms = std::move(terms);
        return evaluate_condition(c, p);
    };

    CHECK(combine(Condition::Kind::all_of, {yes, maybe}) == MatchOutcome::indeterminate);
    CHECK(combine(Condition::Kind::all_of, {no, maybe}) == MatchOutcome::no_match);
    CHECK(combine(Condition::Kind::all_of, {yes, yes}) == MatchOutcome::match);
    CHECK(combine(Condition::Kind::any_of, {yes, maybe}) == MatchOutcome::match);
    CHECK(combine(Condition::Kind::any_of, {no, maybe}) == MatchOutcome::indeterminate);
    CHECK(combine(Condition::Kind::any_of, {no, no}) == MatchOutcome::no_match);
}

TEST_CASE("indeterminate matches downgrade full certainty to partial", "[rules]") {
    auto rs = bundled();
    const RuleSet& schneider = rs.at(DeviceFamily::schneider_bmx_p34);

    // No firmware observed: cluster 2 (firmware < 3.10) fires as indeterminate.
    auto a = match_cves(schneider_profile("BMX P34 1000", std::nullopt, {{Transport::tcp, 502}}),
                        schneider);
    const Finding* f = find_cve(a, "CVE-2019-6857");
    REQUIRE(f);
    CHECK(f->certainty == Certainty::partial);
    CHECK(f->cluster_id == "2");

    // With old firmware observed the same finding is a certain one.
    auto b = match_cves(schneider_profile("BMX P34 1000", "V 2.80", {{Transport::tcp, 502}}),
                        schneider);
    REQUIRE(find_cve(b, "CVE-2019-6857"));
    CHECK(find_cve(b, "CVE-2019-6857")->certainty == Certainty::full);

    // Declared partial/none ratings are never upgraded or further downgraded.
    auto c = match_cves(schneider_profile("BMX P34 2030", std::nullopt, {{Transport::tcp, 502}}),
                        schneider);
    const Finding* none_rated = find_cve(c, "CVE-2020-7475");
    REQUIRE(none_rated);  // cluster 1 fires indeterminately on unknown firmware
    CHECK(none_rated->certainty == Certainty::none);
}

TEST_CASE("a port-502-only profile raises the full shared-condition group", "[rules]") {
    auto rs = bundled();
    const RuleSet& schneider = rs.at(DeviceFamily::schneider_bmx_p34);
    auto a = match_cves(schneider_profile(std::nullopt, std::nullopt, {{Transport::tcp, 502}}),
                        schneider);

    const char* cluster7[] = {
        "CVE-2019-6845", "CVE-2019-6808", "CVE-2019-6807", "CVE-2019-6806",
        "CVE-2019-6821", "CVE-2018-7857", "CVE-2018-7856", "CVE-2018-7855",
        "CVE-2018-7854", "CVE-2018-7853", "CVE-2018-7852", "CVE-2018-7844"};
    for (const char* cve : cluster7) {
        const Finding* f = find_cve(a, cve);
        REQUIRE(f);
        CHECK(f->cluster_id == "7");
        CHECK(f->certainty == Certainty::full);
    }
}

TEST_CASE("a cve listed in two clusters is counted once", "[rules]") {
    auto rs = bundled();
    const RuleSet& schneider = rs.at(DeviceFamily::schneider_bmx_p34);

    // Old firmware plus ftp: clusters 2 and 5 both fire and both list
    // CVE-2018-7847.
    auto a = match_cves(schneider_profile("BMX P34 2020", "V 2.80",
                                          {{Transport::tcp, 502}, {Transport::tcp, 21}}),
                        schneider);
    std::size_t hits = 0;
    for (const auto& f : a.findings)
        if (f.cve_id == "CVE-2018-7847") ++hits;
    REQUIRE(hits == 1);
    CHECK(find_cve(a, "CVE-2018-7847")->cluster_id == "2");  // first cluster in file order

    // The other nine ftp-cluster members are present alongside.
    CHECK(has_cve(a, "CVE-2019-6852"));
    CHECK(has_cve(a, "CVE-2018-7241"));
}

TEST_CASE("findings come back sorted by cve id with no duplicates", "[rules]") {
    auto rs = bundled();
    auto a = match_cves(schneider_profile("BMX P34 2030", "V 2.80",
                                          {{Transport::tcp, 502}, {Transport::tcp, 21}}),
                        rs.at(DeviceFamily::schneider_bmx_p34));
    REQUIRE(a.findings.size() > 10);
    for (std::size_t i = 1; i < a.findings.size(); ++i)
        CHECK(a.findings[i - 1].cve_id < a.findings[i].cve_id);
}

TEST_CASE("match_cves rejects a profile from another family", "[rules]") {
    auto rs = bundled();
    auto p = schneider_profile("BMX P34 2020", "V 2.80", {{Transport::tcp, 502}});
    CHECK_THROWS_AS(match_cves(p, rs.at(DeviceFamily::omron_cj_cs)), ValidationError);
}

TEST_CASE("siemens wildcard firmware rows behave per branch", "[rules]") {
    auto rs = bundled();
    const RuleSet& siemens = rs.at(DeviceFamily::siemens_s7_300);

    DeviceProfile p;
    p.family = DeviceFamily::siemens_s7_300;
    p.ip = "192.0.2.5";
    p.open_ports = {{Transport::tcp, 102}};
    p.fields.entries = {{"Module type", "CPU 314"}};
    p.model = "CPU 314";

    p.firmware_raw = "V 3.2.16";
    p.firmware = parse_version(*p.firmware_raw);
    auto a = match_cves(p, siemens);
    CHECK(has_cve(a, "CVE-2019-18336"));       // < 3.X.17 holds for 3.2.16
    CHECK_FALSE(has_cve(a, "CVE-2018-16561")); // < 3.X.16 does not
    CHECK(has_cve(a, "CVE-2016-3949"));        // < 3.3.12 branch-wise

    p.firmware_raw = "V 4.0.0";
    p.firmware = parse_version(*p.firmware_raw);
    auto b = match_cves(p, siemens);
    CHECK_FALSE(has_cve(b, "CVE-2019-18336"));  // 4.* is outside the 3.X branch
    CHECK(has_cve(b, "CVE-2019-19300"));        // plain CPU rows still apply
}
