#pragma once

// Declarative CVE applicability rules and their evaluation against device
// profiles.
//
// A rule file carries one family's CVEs. Each CVE either belongs to a cluster
// (a group sharing one applicability condition, evaluated once per device) or
// carries its own condition. Evaluation is three-valued: a firmware comparison
// against a device whose firmware was not observed yields "indeterminate,
// assumed matching" — the no-patch-assumed worst case — which counts as a
// match but downgrades the finding's certainty.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "audit/fingerprint.hpp"
#include "audit/model.hpp"
#include "audit/version.hpp"

namespace audit {

enum class MatchOutcome { no_match, match, indeterminate };

enum class Certainty { none, partial, full };

inline std::string to_string(Certainty c) {
    switch (c) {
        case Certainty::full: return "full";
        case Certainty::partial: return "partial";
        case Certainty::none: return "none";
    }
    return "?";
}

inline Certainty certainty_from_string(std::string_view s) {
    if (s == "full") return Certainty::full;
    if (s == "partial") return Certainty::partial;
    if (s == "none") return Certainty::none;
    throw ValidationError("unknown certainty \"" + std::string(s) + "\"");
}

// Well-known service names usable in conditions ("ftp present" style rows).
inline std::optional<std::pair<Transport, std::uint16_t>> service_port(std::string_view name) {
    if (name == "ftp") return {{Transport::tcp, 21}};
    if (name == "ssh") return {{Transport::tcp, 22}};
    if (name == "telnet") return {{Transport::tcp, 23}};
    if (name == "http") return {{Transport::tcp, 80}};
    if (name == "https") return {{Transport::tcp, 443}};
    if (name == "tftp") return {{Transport::udp, 69}};
    if (name == "snmp") return {{Transport::udp, 161}};
    if (name == "vnc") return {{Transport::tcp, 5900}};
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Condition tree

struct Condition {
    enum class Kind {
        always,
        port_open,
        banner_contains,
        field_contains,
        model_in,
        firmware_satisfies,
        service_present,
        all_of,
        any_of,
    };

    Kind kind = Kind::always;
    Transport transport = Transport::tcp;  // port_open
    std::uint16_t port = 0;                // port_open
    std::string key;                       // field_contains
    std::string needle;                    // banner_contains / field_contains
    std::vector<std::string> models;       // model_in (any listed substring)
    VersionConstraint constraint;          // firmware_satisfies
    std::string service;                   // service_present
    std::vector<Condition> terms;          // all_of / any_of
};

inline constexpr int kMaxConditionDepth = 8;

inline Condition parse_condition(const ordered_json& j, int depth = 1) {
    if (depth > kMaxConditionDepth)
        throw ValidationError("condition tree deeper than " + std::to_string(kMaxConditionDepth));
    if (!j.is_object() || !j.contains("op") || !j["op"].is_string())
        throw SchemaError("condition needs a string \"op\"");

    Condition c;
    std::string op = j["op"].get<std::string>();
    if (op == "always") {
        c.kind = Condition::Kind::always;
    } else if (op == "port_open") {
        c.kind = Condition::Kind::port_open;
        if (!j.contains("transport") || !j.contains("port"))
            throw SchemaError("port_open needs transport and port");
        c.transport = transport_from_string(j["transport"].get<std::string>());
        auto port = j["port"].get<std::int64_t>();
        if (port < 1 || port > 65535)
            throw ValidationError("port_open port " + std::to_string(port) + " out of range");
        c.port = static_cast<std::uint16_t>(port);
    } else if (op == "banner_contains") {
        c.kind = Condition::Kind::banner_contains;
        if (!j.contains("needle") || !j["needle"].is_string() || j["needle"].get<std::string>().empty())
            throw SchemaError("banner_contains needs a non-empty \"needle\"");
        c.needle = j["needle"].get<std::string>();
    } else if (op == "field_contains") {
        c.kind = Condition::Kind::field_contains;
        if (!j.contains("key") || !j["key"].is_string() || !j.contains("needle") ||
            !j["needle"].is_string())
            throw SchemaError("field_contains needs \"key\" and \"needle\"");
        c.key = j["key"].get<std::string>();
        c.needle = j["needle"].get<std::string>();
        if (c.key.empty() || c.needle.empty())
            throw ValidationError("field_contains key/needle must be non-empty");
    } else if (op == "model_in") {
        c.kind = Condition::Kind::model_in;
        if (!j.contains("models") || !j["models"].is_array() || j["models"].empty())
            throw SchemaError("model_in needs a non-empty \"models\" array");
        for (const auto& m : j["models"]) {
            if (!m.is_string() || m.get<std::string>().empty())
                throw ValidationError("model_in entries must be non-empty strings");
            c.models.push_back(m.get<std::string>());
        }
    } else if (op == "firmware") {
        c.kind = Condition::Kind::firmware_satisfies;
        if (!j.contains("cmp") || !j["cmp"].is_string() || !j.contains("pattern") ||
            !j["pattern"].is_string())
            throw SchemaError("firmware needs \"cmp\" and \"pattern\"");
        try {
            c.constraint = parse_version_constraint(parse_version_op(j["cmp"].get<std::string>()),
                                                    j["pattern"].get<std::string>());
        } catch (const MalformedVersion& e) {
            throw ValidationError(std::string("bad firmware constraint: ") + e.what());
        }
    } else if (op == "service_present") {
        c.kind = Condition::Kind::service_present;
        if (!j.contains("service") || !j["service"].is_string())
            throw SchemaError("service_present needs \"service\"");
        c.service = j["service"].get<std::string>();
        if (!service_port(c.service))
            throw ValidationError("unknown service \"" + c.service + "\"");
    } else if (op == "and" || op == "or") {
        c.kind = op == "and" ? Condition::Kind::all_of : Condition::Kind::any_of;
        if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty())
            throw ValidationError("\"" + op + "\" needs a non-empty \"terms\" array");
        for (const auto& t : j["terms"]) c.terms.push_back(parse_condition(t, depth + 1));
    } else {
        throw SchemaError("unknown condition op \"" + op + "\"");
    }
    return c;
}

inline MatchOutcome evaluate_condition(const Condition& c, const DeviceProfile& profile) {
    switch (c.kind) {
        case Condition::Kind::always:
            return MatchOutcome::match;
        case Condition::Kind::port_open:
            return profile.port_open(c.transport, c.port) ? MatchOutcome::match
                                                          : MatchOutcome::no_match;
        case Condition::Kind::service_present: {
            auto tp = service_port(c.service);
            return tp && profile.port_open(tp->first, tp->second) ? MatchOutcome::match
                                                                  : MatchOutcome::no_match;
        }
        case Condition::Kind::banner_contains:
            return profile.any_banner_contains(c.needle) ? MatchOutcome::match
                                                         : MatchOutcome::no_match;
        case Condition::Kind::field_contains:
            return profile.fields.value_contains(c.key, c.needle) ? MatchOutcome::match
                                                                  : MatchOutcome::no_match;
        case Condition::Kind::model_in: {
            if (!profile.model) return MatchOutcome::no_match;
            for (const auto& m : c.models)
                if (profile.model->find(m) != std::string::npos) return MatchOutcome::match;
            return MatchOutcome::no_match;
        }
        case Condition::Kind::firmware_satisfies:
            if (!profile.firmware) return MatchOutcome::indeterminate;
            return compare_version(*profile.firmware, c.constraint) ? MatchOutcome::match
                                                                    : MatchOutcome::no_match;
        case Condition::Kind::all_of: {
            bool any_indeterminate = false;
            for (const auto& t : c.terms) {
                MatchOutcome o = evaluate_condition(t, profile);
                if (o == MatchOutcome::no_match) return MatchOutcome::no_match;
                if (o == MatchOutcome::indeterminate) any_indeterminate = true;
            }
            return any_indeterminate ? MatchOutcome::indeterminate : MatchOutcome::match;
        }
        case Condition::Kind::any_of: {
            bool any_indeterminate = false;
            for (const auto& t : c.terms) {
                MatchOutcome o = evaluate_condition(t, profile);
                if (o == MatchOutcome::match) return MatchOutcome::match;
                if (o == MatchOutcome::indeterminate) any_indeterminate = true;
            }
            return any_indeterminate ? MatchOutcome::indeterminate : MatchOutcome::no_match;
        }
    }
    return MatchOutcome::no_match;
}

// ---------------------------------------------------------------------------
// Rule sets

struct CveRule {
    std::string cve_id;
    std::optional<double> cvss_v2;
    std::optional<double> cvss_v31;
    bool v31_star = false;  // v3.1 score derived manually rather than from NVD
    std::string stride;     // letters, slash-separated ("T/E")
    Certainty certainty = Certainty::full;
    std::optional<std::string> cluster_id;
    std::optional<Condition> condition;  // unclustered rules only
    std::string note;

    // Scoring policy: prefer the v3.1 score (starred ones included), fall
    // back to v2 when no v3.1 score exists.
    double score_used() const { return cvss_v31 ? *cvss_v31 : cvss_v2.value(); }
};

struct Cluster {
    std::string id;
    Condition condition;
    std::vector<std::string> members;  // cve ids sharing the condition
};

struct RuleSet {
    DeviceFamily family = DeviceFamily::unknown;
    std::vector<CveRule> rules;
    std::vector<Cluster> clusters;

    const CveRule* find_rule(std::string_view cve_id) const {
        for (const auto& r : rules)
            if (r.cve_id == cve_id) return &r;
        return nullptr;
    }
};

inline std::vector<char> stride_letters(std::string_view stride) {
    std::vector<char> out;
    for (char c : stride)
        if (c != '/') out.push_back(c);
    return out;
}

inline RuleSet parse_ruleset(const ordered_json& doc) {
    if (!doc.is_object()) throw SchemaError("rule file is not a JSON object");
    if (!doc.contains("family") || !doc["family"].is_string())
        throw SchemaError("rule file lacks \"family\"");
    RuleSet out;
    std::string id = doc["family"].get<std::string>();
    out.family = family_from_id(id);
    if (out.family == DeviceFamily::unknown)
        throw ValidationError("rule file for unknown family \"" + id + "\"");
    if (!doc.contains("rules") || !doc["rules"].is_array() || doc["rules"].empty())
        throw ValidationError("rule file " + id + " has no rules");

    static const std::string kStrideAlphabet = "STRIDE";
    std::set<std::string> seen;
    for (const auto& rj : doc["rules"]) {
        if (!rj.is_object() || !rj.contains("cve") || !rj["cve"].is_string())
            throw SchemaError("rule entry lacks \"cve\"");
        CveRule r;
        r.cve_id = rj["cve"].get<std::string>();
        std::string where = id + " rule " + r.cve_id;
        if (!seen.insert(r.cve_id).second) throw ValidationError(where + ": duplicate cve id");

        auto score = [&](const char* k) -> std::optional<double> {
            if (!rj.contains(k) || rj[k].is_null()) return std::nullopt;
            if (!rj[k].is_number()) throw SchemaError(where + ": " + k + " is not a number");
            double v = rj[k].get<double>();
            if (v < 0.0 || v > 10.0)
                throw ValidationError(where + ": " + k + " outside [0,10]");
            return v;
        };
        r.cvss_v2 = score("cvss_v2");
        r.cvss_v31 = score("cvss_v31");
        if (!r.cvss_v2 && !r.cvss_v31) throw ValidationError(where + ": no CVSS score at all");
        if (rj.contains("v31_star")) r.v31_star = rj["v31_star"].get<bool>();
        if (r.v31_star && !r.cvss_v31)
            throw ValidationError(where + ": v31_star without a cvss_v31 score");

        if (!rj.contains("stride") || !rj["stride"].is_string())
            throw SchemaError(where + ": lacks \"stride\"");
        r.stride = rj["stride"].get<std::string>();
        auto letters = stride_letters(r.stride);
        if (letters.empty()) throw ValidationError(where + ": empty stride class");
        for (char c : letters)
            if (kStrideAlphabet.find(c) == std::string::npos)
                throw ValidationError(where + ": stride letter '" + std::string(1, c) +
                                      "' outside STRIDE");

        if (!rj.contains("certainty") || !rj["certainty"].is_string())
            throw SchemaError(where + ": lacks \"certainty\"");
        r.certainty = certainty_from_string(rj["certainty"].get<std::string>());

        if (rj.contains("cluster") && !rj["cluster"].is_null()) {
            if (!rj["cluster"].is_string()) throw SchemaError(where + ": cluster must be a string");
            r.cluster_id = rj["cluster"].get<std::string>();
        }
        if (rj.contains("condition") && !rj["condition"].is_null())
            r.condition = parse_condition(rj["condition"]);
        if (rj.contains("note") && rj["note"].is_string()) r.note = rj["note"].get<std::string>();

        if (r.cluster_id && r.condition)
            throw ValidationError(where + ": clustered rules take the cluster's condition, not "
                                          "their own");
        if (!r.cluster_id && !r.condition)
            throw ValidationError(where + ": needs either a cluster or a condition");
        out.rules.push_back(std::move(r));
    }

    if (doc.contains("clusters")) {
        if (!doc["clusters"].is_object()) throw SchemaError(id + ": clusters must be an object");
        for (const auto& [cid, cj] : doc["clusters"].items()) {
            if (!cj.is_object() || !cj.contains("condition") || !cj.contains("members"))
                throw SchemaError(id + " cluster " + cid + ": needs condition and members");
            Cluster cl;
            cl.id = cid;
            cl.condition = parse_condition(cj["condition"]);
            if (!cj["members"].is_array() || cj["members"].empty())
                throw ValidationError(id + " cluster " + cid + ": members must be non-empty");
            for (const auto& m : cj["members"]) {
                std::string cve = m.get<std::string>();
                if (!out.find_rule(cve))
                    throw ValidationError(id + " cluster " + cid + ": member " + cve +
                                          " has no rule entry");
                cl.members.push_back(std::move(cve));
            }
            out.clusters.push_back(std::move(cl));
        }
    }

    // Every referenced cluster must exist and list the referencing rule.
    for (const auto& r : out.rules) {
        if (!r.cluster_id) continue;
        const Cluster* found = nullptr;
        for (const auto& cl : out.clusters)
            if (cl.id == *r.cluster_id) found = &cl;
        if (!found)
            throw ValidationError(id + " rule " + r.cve_id + ": cluster " + *r.cluster_id +
                                  " is not defined");
        if (std::find(found->members.begin(), found->members.end(), r.cve_id) ==
            found->members.end())
            throw ValidationError(id + " cluster " + *r.cluster_id + ": does not list " + r.cve_id);
    }
    return out;
}

inline RuleSet load_ruleset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rule file: " + path.string());
    ordered_json doc = ordered_json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("rule file is not valid JSON: " + path.string());
    return parse_ruleset(doc);
}

/// Loads every *.rules.json under `dir` (sorted by filename), one family each.
inline std::map<DeviceFamily, RuleSet> load_rulesets(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw IoError("rule directory does not exist: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto& p = entry.path();
        if (p.filename().string().ends_with(".rules.json")) files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    std::map<DeviceFamily, RuleSet> out;
    for (const auto& p : files) {
        RuleSet rs = load_ruleset(p);
        if (out.count(rs.family))
            throw ValidationError("duplicate rule file for family " + family_id(rs.family));
        out.emplace(rs.family, std::move(rs));
    }
    if (out.empty()) throw ValidationError("no *.rules.json files in " + dir.string());
    return out;
}

// ---------------------------------------------------------------------------
// Matching

struct Finding {
    std::string cve_id;
    std::optional<std::string> cluster_id;
    double score_used = 0.0;
    std::optional<double> cvss_v2;
    std::optional<double> cvss_v31;
    bool v31_star = false;
    std::string stride;
    Certainty certainty = Certainty::full;  // effective, after downgrades
};

struct DeviceAssessment {
    std::string ip;
    std::string country_code;
    std::string country_name;
    DeviceFamily family = DeviceFamily::unknown;
    std::vector<Finding> findings;  // unique cve ids, sorted
};

namespace detail {

inline Certainty effective_certainty(Certainty declared, MatchOutcome outcome) {
    if (outcome == MatchOutcome::indeterminate && declared == Certainty::full)
        return Certainty::partial;
    return declared;
}

// Keep the better of two findings for the same CVE: higher certainty first,
// then higher score, then the earlier one.
inline void consider_finding(std::map<std::string, Finding>& best, Finding&& f) {
    auto it = best.find(f.cve_id);
    if (it == best.end()) {
        best.emplace(f.cve_id, std::move(f));
        return;
    }
    Finding& cur = it->second;
    if (static_cast<int>(f.certainty) > static_cast<int>(cur.certainty) ||
        (f.certainty == cur.certainty && f.score_used > cur.score_used))
        cur = std::move(f);
}

inline Finding make_finding(const CveRule& r, std::optional<std::string> cluster_id,
                            MatchOutcome outcome) {
    Finding f;
    f.cve_id = r.cve_id;
    f.cluster_id = std::move(cluster_id);
    f.score_used = r.score_used();
    f.cvss_v2 = r.cvss_v2;
    f.cvss_v31 = r.cvss_v31;
    f.v31_star = r.v31_star;
    f.stride = r.stride;
    f.certainty = effective_certainty(r.certainty, outcome);
    return f;
}

}  // namespace detail

/// Evaluates one device against its family's rules. Cluster conditions are
/// evaluated once and apply to every member (all-or-nothing); per-CVE dedup
/// keeps one finding per CVE id even when several clusters list it.
inline DeviceAssessment match_cves(const DeviceProfile& profile, const RuleSet& ruleset) {
    if (profile.family != ruleset.family)
        throw ValidationError("profile family " + family_id(profile.family) +
                              " does not match ruleset family " + family_id(ruleset.family));

    std::map<std::string, Finding> best;
    for (const auto& cl : ruleset.clusters) {
        MatchOutcome o = evaluate_condition(cl.condition, profile);
        if (o == MatchOutcome::no_match) continue;
        for (const auto& cve : cl.members)
            detail::consider_finding(best, detail::make_finding(*ruleset.find_rule(cve), cl.id, o));
    }
    for (const auto& r : ruleset.rules) {
        if (!r.condition) continue;
        MatchOutcome o = evaluate_condition(*r.condition, profile);
        if (o == MatchOutcome::no_match) continue;
        detail::consider_finding(best, detail::make_finding(r, std::nullopt, o));
    }

    DeviceAssessment out;
    out.ip = profile.ip;
    out.country_code = profile.country_code;
    out.country_name = profile.country_name;
    out.family = profile.family;
    for (auto& [cve, f] : best) out.findings.push_back(std::move(f));
    return out;
}

}  // namespace audit
