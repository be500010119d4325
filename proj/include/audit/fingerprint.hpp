#pragma once

// Family fingerprinting: decide which device family a host belongs to and
// pull model / firmware out of the matched banner. Fingerprints are data
// (fingerprints.json); the match semantics live here.
//
// A fingerprint matches when one of its required ports is open and that
// service's banner contains every required substring (case-sensitive). An
// optional local filter then vets the extracted model or the service version
// string; hosts failing the filter fall through to the next fingerprint.

#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "audit/model.hpp"
#include "audit/version.hpp"

namespace audit {

struct RequiredPort {
    Transport transport = Transport::tcp;
    std::uint16_t port = 0;
};

struct ProfileFilter {
    std::string field;  // "model" or "version"
    std::vector<std::string> contains_any;
    std::vector<std::string> prefix_any;
    bool pass_if_absent = false;
};

struct FieldExtraction {
    // source: "field" (banner field lookup, first key that is present wins),
    // "banner_regex" (first regex match in the banner; capture group 1 if the
    // pattern has one), "version_token" (service version up to the first
    // space), "version_after_slash" (service version after the last '/').
    std::string source;
    std::vector<std::string> keys;
    std::string pattern;
};

struct FamilyFingerprint {
    DeviceFamily family = DeviceFamily::unknown;
    std::vector<RequiredPort> required_ports;
    std::vector<std::string> banner_must_contain;
    std::optional<ProfileFilter> filter;
    std::optional<FieldExtraction> model_from;
    std::optional<FieldExtraction> firmware_from;
};

struct FingerprintSet {
    std::vector<FamilyFingerprint> entries;
};

/// Everything the rule engine needs to know about one device.
struct DeviceProfile {
    DeviceFamily family = DeviceFamily::unknown;
    std::string ip;
    std::string country_code;
    std::string country_name;
    std::vector<std::pair<Transport, std::uint16_t>> open_ports;
    std::vector<std::string> banners;  // raw data of every service
    FieldMap fields;                   // banner fields merged across services
    std::optional<std::string> model;
    std::optional<std::string> firmware_raw;
    std::optional<Version> firmware;  // absent when missing or unparseable

    bool port_open(Transport t, std::uint16_t port) const {
        for (const auto& [pt, pp] : open_ports)
            if (pt == t && pp == port) return true;
        return false;
    }

    bool any_banner_contains(std::string_view needle) const {
        for (const auto& b : banners)
            if (b.find(needle) != std::string::npos) return true;
        return false;
    }
};

// ---------------------------------------------------------------------------
// Loader

namespace detail {

inline FieldExtraction parse_extraction(const ordered_json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("source") || !j["source"].is_string())
        throw SchemaError(where + ": extraction needs a string \"source\"");
    FieldExtraction out;
    out.source = j["source"].get<std::string>();
    if (out.source == "field") {
        if (!j.contains("keys") || !j["keys"].is_array() || j["keys"].empty())
            throw SchemaError(where + ": field extraction needs non-empty \"keys\"");
        for (const auto& k : j["keys"]) {
            if (!k.is_string()) throw SchemaError(where + ": extraction key is not a string");
            out.keys.push_back(k.get<std::string>());
        }
    } else if (out.source == "banner_regex") {
        if (!j.contains("pattern") || !j["pattern"].is_string())
            throw SchemaError(where + ": banner_regex extraction needs \"pattern\"");
        out.pattern = j["pattern"].get<std::string>();
        try {
            std::regex probe(out.pattern);
        } catch (const std::regex_error& e) {
            throw ValidationError(where + ": bad regex \"" + out.pattern + "\": " + e.what());
        }
    } else if (out.source != "version_token" && out.source != "version_after_slash") {
        throw SchemaError(where + ": unknown extraction source \"" + out.source + "\"");
    }
    return out;
}

}  // namespace detail

inline FingerprintSet parse_fingerprints(const ordered_json& doc) {
    if (!doc.is_object() || !doc.contains("fingerprints") || !doc["fingerprints"].is_array())
        throw SchemaError("fingerprint file needs a top-level \"fingerprints\" array");

    FingerprintSet out;
    for (const auto& fj : doc["fingerprints"]) {
        if (!fj.is_object()) throw SchemaError("fingerprint entry is not an object");
        if (!fj.contains("family") || !fj["family"].is_string())
            throw SchemaError("fingerprint entry lacks \"family\"");
        FamilyFingerprint fp;
        std::string id = fj["family"].get<std::string>();
        fp.family = family_from_id(id);
        if (fp.family == DeviceFamily::unknown)
            throw ValidationError("fingerprint for unknown family \"" + id + "\"");
        std::string where = "fingerprint " + id;

        if (!fj.contains("required_ports") || !fj["required_ports"].is_array() ||
            fj["required_ports"].empty())
            throw ValidationError(where + ": required_ports must be a non-empty array");
        for (const auto& pj : fj["required_ports"]) {
            if (!pj.is_object() || !pj.contains("transport") || !pj.contains("port"))
                throw SchemaError(where + ": required port needs transport and port");
            RequiredPort rp;
            rp.transport = transport_from_string(pj["transport"].get<std::string>());
            auto port = pj["port"].get<std::int64_t>();
            if (port < 1 || port > 65535)
                throw ValidationError(where + ": port " + std::to_string(port) + " out of range");
            rp.port = static_cast<std::uint16_t>(port);
            fp.required_ports.push_back(rp);
        }

        if (!fj.contains("banner_must_contain") || !fj["banner_must_contain"].is_array() ||
            fj["banner_must_contain"].empty())
            throw ValidationError(where + ": banner_must_contain must be a non-empty array");
        for (const auto& s : fj["banner_must_contain"]) {
            if (!s.is_string() || s.get<std::string>().empty())
                throw ValidationError(where + ": banner substrings must be non-empty strings");
            fp.banner_must_contain.push_back(s.get<std::string>());
        }

        if (fj.contains("filter")) {
            const auto& flt = fj["filter"];
            if (!flt.is_object() || !flt.contains("field") || !flt["field"].is_string())
                throw SchemaError(where + ": filter needs a string \"field\"");
            ProfileFilter f;
            f.field = flt["field"].get<std::string>();
            if (f.field != "model" && f.field != "version")
                throw ValidationError(where + ": filter field must be \"model\" or \"version\"");
            if (flt.contains("contains_any"))
                for (const auto& s : flt["contains_any"]) f.contains_any.push_back(s.get<std::string>());
            if (flt.contains("prefix_any"))
                for (const auto& s : flt["prefix_any"]) f.prefix_any.push_back(s.get<std::string>());
            if (flt.contains("pass_if_absent")) f.pass_if_absent = flt["pass_if_absent"].get<bool>();
            if (f.contains_any.empty() && f.prefix_any.empty())
                throw ValidationError(where + ": filter needs contains_any or prefix_any");
            fp.filter = std::move(f);
        }

        if (fj.contains("model_from"))
            fp.model_from = detail::parse_extraction(fj["model_from"], where + " model_from");
        if (fj.contains("firmware_from"))
            fp.firmware_from = detail::parse_extraction(fj["firmware_from"], where + " firmware_from");

        out.entries.push_back(std::move(fp));
    }
    if (out.entries.empty()) throw ValidationError("fingerprint file defines no fingerprints");
    return out;
}

inline FingerprintSet load_fingerprints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fingerprint file: " + path.string());
    ordered_json doc = ordered_json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw SchemaError("fingerprint file is not valid JSON: " + path.string());
    return parse_fingerprints(doc);
}

// ---------------------------------------------------------------------------
// Matching

namespace detail {

inline std::optional<std::string> run_extraction(const FieldExtraction& ex,
                                                 const ServiceObservation& matched) {
    if (ex.source == "field") {
        for (const auto& key : ex.keys)
            if (auto v = matched.fields.first(key); v && !v->empty()) return std::string(*v);
        return std::nullopt;
    }
    if (ex.source == "banner_regex") {
        std::regex re(ex.pattern);
        std::smatch m;
        if (std::regex_search(matched.data, m, re))
            return m.size() > 1 && m[1].matched ? m[1].str() : m[0].str();
        return std::nullopt;
    }
    if (ex.source == "version_token") {
        if (!matched.version) return std::nullopt;
        const std::string& v = *matched.version;
        return v.substr(0, v.find(' '));
    }
    if (ex.source == "version_after_slash") {
        if (!matched.version) return std::nullopt;
        const std::string& v = *matched.version;
        std::size_t slash = v.rfind('/');
        if (slash == std::string::npos || slash + 1 == v.size()) return std::nullopt;
        return v.substr(slash + 1);
    }
    return std::nullopt;
}

inline bool filter_passes(const ProfileFilter& f, const std::optional<std::string>& subject) {
    if (!subject) return f.pass_if_absent;
    for (const auto& n : f.contains_any)
        if (subject->find(n) != std::string::npos) return true;
    for (const auto& p : f.prefix_any)
        if (subject->rfind(p, 0) == 0) return true;
    return false;
}

// The service satisfying required port + banner substrings, or nullptr.
inline const ServiceObservation* fingerprint_service(const FamilyFingerprint& fp,
                                                     const HostRecord& host) {
    for (const auto& rp : fp.required_ports) {
        const ServiceObservation* svc = host.find_service(rp.transport, rp.port);
        if (!svc) continue;
        bool all = true;
        for (const auto& needle : fp.banner_must_contain)
            if (svc->data.find(needle) == std::string::npos) {
                all = false;
                break;
            }
        if (all) return svc;
    }
    return nullptr;
}

}  // namespace detail

struct IdentifyResult {
    DeviceFamily family = DeviceFamily::unknown;
    std::vector<DeviceFamily> also_matched;  // extra fingerprint hits, reported as a warning
};

/// Builds the profile for one host. First matching fingerprint (file order)
/// wins; any further fingerprint that would also match is recorded so callers
/// can warn about ambiguous fingerprint sets.
inline DeviceProfile build_profile(const HostRecord& host, const FingerprintSet& fps,
                                   IdentifyResult* identify = nullptr) {
    DeviceProfile profile;
    profile.ip = host.ip;
    profile.country_code = host.country_code;
    profile.country_name = host.country_name;
    for (const auto& s : host.services) {
        profile.open_ports.emplace_back(s.transport, s.port);
        profile.banners.push_back(s.data);
        for (const auto& e : s.fields.entries) profile.fields.entries.push_back(e);
    }

    for (const auto& fp : fps.entries) {
        const ServiceObservation* svc = detail::fingerprint_service(fp, host);
        if (!svc) continue;

        std::optional<std::string> model;
        std::optional<std::string> firmware_raw;
        if (fp.model_from) model = detail::run_extraction(*fp.model_from, *svc);
        if (fp.firmware_from) firmware_raw = detail::run_extraction(*fp.firmware_from, *svc);

        if (fp.filter) {
            const std::optional<std::string>* subject = &model;
            std::optional<std::string> version = svc->version;
            if (fp.filter->field == "version") subject = &version;
            if (!detail::filter_passes(*fp.filter, *subject)) continue;
        }

        if (profile.family == DeviceFamily::unknown) {
            profile.family = fp.family;
            profile.model = std::move(model);
            profile.firmware_raw = std::move(firmware_raw);
            if (profile.firmware_raw) {
                try {
                    profile.firmware = parse_version(*profile.firmware_raw);
                } catch (const MalformedVersion&) {
                    // unusable revision string: treat as unobserved
                }
            }
            if (identify) identify->family = fp.family;
            if (!identify) break;  // no ambiguity reporting wanted
        } else if (identify) {
            identify->also_matched.push_back(fp.family);
        }
    }
    return profile;
}

inline DeviceFamily identify_family(const HostRecord& host, const FingerprintSet& fps) {
    return build_profile(host, fps).family;
}

}  // namespace audit
