#pragma once

// Deterministic synthetic-corpus generator.
//
// A corpus spec names, per family, the country layout and a per-CVE (or
// per-cluster) occurrence target. The generator fabricates host records whose
// banners, firmware strings and open ports drive the real fingerprint + rule
// pipeline to exactly those counts. Infeasible target combinations are
// rejected rather than approximated.
//
// The construction walks the targets in descending count order. Because the
// condition language has no negation, target sets at each distinct count
// boundary form a chain of prefixes; each boundary needs a banner template
// matching exactly that prefix, and the class sizes are the successive count
// differences.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "audit/fingerprint.hpp"
#include "audit/model.hpp"
#include "audit/rules.hpp"

namespace audit {

class InfeasibleSpec : public std::runtime_error {
public:
    explicit InfeasibleSpec(const std::string& msg) : std::runtime_error(msg) {}
};

struct CountrySlot {
    std::string code;
    std::string name;
    std::size_t count = 0;
};

struct FamilyCorpusSpec {
    DeviceFamily family = DeviceFamily::unknown;
    std::vector<CountrySlot> countries;
    // key is "cluster:<id>" or a CVE id; value is the wanted device count
    std::vector<std::pair<std::string, std::size_t>> targets;
    std::vector<std::optional<std::string>> models;     // null => model line omitted
    std::vector<std::optional<std::string>> firmwares;  // null => firmware line omitted
    std::vector<std::vector<std::string>> service_sets; // extra services by well-known name
};

struct CorpusSpec {
    std::uint64_t rng_seed = 0;
    std::vector<FamilyCorpusSpec> families;
};

// ---------------------------------------------------------------------------
// Spec loading

inline CorpusSpec parse_corpus_spec(const ordered_json& doc) {
    if (!doc.is_object() || !doc.contains("families") || !doc["families"].is_array() ||
        doc["families"].empty())
        throw SchemaError("corpus spec needs a non-empty \"families\" array");
    CorpusSpec out;
    if (doc.contains("rng_seed")) {
        if (!doc["rng_seed"].is_number_unsigned() && !doc["rng_seed"].is_number_integer())
            throw SchemaError("rng_seed must be an integer");
        out.rng_seed = doc["rng_seed"].get<std::uint64_t>();
    }

    for (const auto& fj : doc["families"]) {
        if (!fj.is_object() || !fj.contains("family") || !fj["family"].is_string())
            throw SchemaError("corpus family entry lacks \"family\"");
        FamilyCorpusSpec fam;
        std::string id = fj["family"].get<std::string>();
        fam.family = family_from_id(id);
        if (fam.family == DeviceFamily::unknown)
            throw ValidationError("corpus spec names unknown family \"" + id + "\"");

        if (!fj.contains("countries") || !fj["countries"].is_array() || fj["countries"].empty())
            throw ValidationError(id + ": countries must be a non-empty array");
        for (const auto& cj : fj["countries"]) {
            if (!cj.is_object() || !cj.contains("code") || !cj.contains("name") ||
                !cj.contains("count"))
                throw SchemaError(id + ": country entry needs code, name, count");
            CountrySlot slot;
            slot.code = cj["code"].get<std::string>();
            slot.name = cj["name"].get<std::string>();
            auto n = cj["count"].get<std::int64_t>();
            if (n < 0) throw ValidationError(id + ": negative country count");
            slot.count = static_cast<std::size_t>(n);
            fam.countries.push_back(std::move(slot));
        }

        if (!fj.contains("targets") || !fj["targets"].is_object())
            throw SchemaError(id + ": targets must be an object");
        for (const auto& [key, vj] : fj["targets"].items()) {
            auto n = vj.get<std::int64_t>();
            if (n < 0) throw ValidationError(id + ": negative target for " + key);
            fam.targets.emplace_back(key, static_cast<std::size_t>(n));
        }

        if (!fj.contains("vocabulary") || !fj["vocabulary"].is_object())
            throw SchemaError(id + ": vocabulary must be an object");
        const auto& voc = fj["vocabulary"];
        auto read_nullable_list = [&](const char* key, std::vector<std::optional<std::string>>& dst) {
            if (!voc.contains(key)) {
                dst.push_back(std::nullopt);
                return;
            }
            if (!voc[key].is_array() || voc[key].empty())
                throw SchemaError(id + ": vocabulary " + key + " must be a non-empty array");
            for (const auto& v : voc[key]) {
                if (v.is_null())
                    dst.push_back(std::nullopt);
                else
                    dst.push_back(v.get<std::string>());
            }
        };
        read_nullable_list("models", fam.models);
        read_nullable_list("firmwares", fam.firmwares);
        if (voc.contains("service_sets")) {
            if (!voc["service_sets"].is_array() || voc["service_sets"].empty())
                throw SchemaError(id + ": vocabulary service_sets must be a non-empty array");
            for (const auto& setj : voc["service_sets"]) {
                std::vector<std::string> set;
                for (const auto& s : setj) {
                    std::string name = s.get<std::string>();
                    if (!service_port(name))
                        throw ValidationError(id + ": unknown service \"" + name +
                                              "\" in service_sets");
                    set.push_back(std::move(name));
                }
                fam.service_sets.push_back(std::move(set));
            }
        } else {
            fam.service_sets.push_back({});
        }

        out.families.push_back(std::move(fam));
    }
    return out;
}

inline CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus spec: " + path.string());
    ordered_json doc = ordered_json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SchemaError("corpus spec is not valid JSON: " + path.string());
    return parse_corpus_spec(doc);
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

// Unbiased bounded draw; hand-rolled because the stdlib distribution objects
// are not portable across library implementations.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t n) {
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t x = rng();
        if (x >= threshold) return x % n;
    }
}

inline std::string render_ipv4(std::uint32_t value) {
    return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xFF) + "." +
           std::to_string((value >> 8) & 0xFF) + "." + std::to_string(value & 0xFF);
}

struct BannerTemplate {
    std::optional<std::string> model;
    std::optional<std::string> firmware;
    const std::vector<std::string>* services = nullptr;
};

inline ServiceObservation make_service(Transport t, std::uint16_t port, std::string data,
                                       std::optional<std::string> product = std::nullopt,
                                       std::optional<std::string> version = std::nullopt) {
    ServiceObservation s;
    s.transport = t;
    s.port = port;
    s.data = std::move(data);
    s.product = std::move(product);
    s.version = std::move(version);
    s.fields = extract_banner_fields(s.data);
    return s;
}

inline ServiceObservation extra_service(const std::string& name) {
    auto tp = service_port(name).value();
    if (name == "ftp") return make_service(tp.first, tp.second, "220 FTP server ready.\r\n");
    if (name == "telnet") return make_service(tp.first, tp.second, "\r\nlogin: ");
    if (name == "http")
        return make_service(tp.first, tp.second, "HTTP/1.1 200 OK\r\nContent-Type: text/html\r\n\r\n");
    if (name == "snmp") return make_service(tp.first, tp.second, "SNMPv1 public");
    if (name == "tftp") return make_service(tp.first, tp.second, "Timeout");
    return make_service(tp.first, tp.second, "");
}

inline ServiceObservation family_service(DeviceFamily family, const BannerTemplate& t) {
    switch (family) {
        case DeviceFamily::schneider_bmx_p34: {
            std::string data = "Schneider Electric " + t.model.value_or("BMX") + "\nUnit ID: 0";
            if (t.firmware) data += "\nVersion: " + *t.firmware;
            return make_service(Transport::tcp, 502, data, "Schneider Electric BMX", t.firmware);
        }
        case DeviceFamily::siemens_s7_300: {
            std::string data = "Copyright: Original Siemens Equipment\nPLC name: SIMATIC 300";
            if (t.model) data += "\nModule type: " + *t.model;
            if (t.firmware) data += "\nFirmware: " + *t.firmware;
            return make_service(Transport::tcp, 102, data, "Siemens S7-300", std::nullopt);
        }
        case DeviceFamily::omron_cj_cs: {
            std::string data = "response code: 0x00\nController Data Read";
            if (t.model) data += "\nController Model: " + *t.model;
            if (t.firmware) data += "\nController Version: " + *t.firmware;
            return make_service(Transport::tcp, 9600, data, "Omron FINS", std::nullopt);
        }
        case DeviceFamily::rockwell_micrologix_1400: {
            // the vocabulary "model" carries the full catalogue/series string,
            // e.g. "1766-L32BWA B/16.00"; it doubles as the service version
            std::string label = t.model.value_or("");
            std::string data = "Product name: " + label +
                               "\nVendor ID: Rockwell Automation/Allen-Bradley\nSerial number: 0x0060a37b";
            return make_service(Transport::tcp, 44818, data, "Rockwell Automation",
                                label.empty() ? std::optional<std::string>{} : label);
        }
        case DeviceFamily::mitsubishi_melsec_q: {
            std::string data = "Mitsubishi Electric MELSEC-Q Series";
            if (t.model) data += "\nCPU: " + *t.model;
            return make_service(Transport::tcp, 5007, data, "Mitsubishi MELSEC-Q", std::nullopt);
        }
        case DeviceFamily::unknown: break;
    }
    throw InfeasibleSpec("no banner template for unknown family");
}

inline HostRecord make_host(DeviceFamily family, const BannerTemplate& t, std::string ip,
                            std::string country_code, std::string country_name,
                            std::int64_t observed_at) {
    HostRecord h;
    h.ip = std::move(ip);
    h.country_code = std::move(country_code);
    h.country_name = std::move(country_name);
    h.observed_at = observed_at;
    h.services.push_back(family_service(family, t));
    if (t.services)
        for (const auto& name : *t.services) h.services.push_back(extra_service(name));
    return h;
}

inline std::set<std::string> template_signature(DeviceFamily family, const BannerTemplate& t,
                                                const FingerprintSet& fingerprints,
                                                const RuleSet& ruleset) {
    HostRecord proto = make_host(family, t, "192.0.2.1", "ZZ", "Unknown", 0);
    DeviceProfile profile = build_profile(proto, fingerprints);
    std::set<std::string> sig;
    if (profile.family != family) {
        sig.insert("__foreign_fingerprint__");  // template unusable for this family
        return sig;
    }
    DeviceAssessment a = match_cves(profile, ruleset);
    for (const auto& f : a.findings)
        sig.insert(f.cluster_id ? "cluster:" + *f.cluster_id : f.cve_id);
    return sig;
}

}  // namespace detail

/// Generates the synthetic corpus. Byte-deterministic for a given spec: same
/// seed, same hosts, same order.
inline std::vector<HostRecord> generate_corpus(const CorpusSpec& spec,
                                               const FingerprintSet& fingerprints,
                                               const std::map<DeviceFamily, RuleSet>& rulesets) {
    std::vector<HostRecord> out;
    constexpr std::uint32_t kIpBase = (198u << 24) | (18u << 16);  // 198.18.0.0/15
    constexpr std::size_t kIpBlock = 8192;
    const std::int64_t base_ts = parse_timestamp("2020-04-14T00:00:00Z").value();
    static const char* kOrgs[] = {"Example Networks", "Industrial Hosting BV", "Telecom Nacional",
                                  "Fieldbus Services GmbH"};

    for (std::size_t fam_idx = 0; fam_idx < spec.families.size(); ++fam_idx) {
        const FamilyCorpusSpec& fam = spec.families[fam_idx];
        auto rs_it = rulesets.find(fam.family);
        if (rs_it == rulesets.end())
            throw InfeasibleSpec("no ruleset loaded for family " + family_id(fam.family));
        const RuleSet& ruleset = rs_it->second;

        std::size_t device_count = 0;
        for (const auto& c : fam.countries) device_count += c.count;
        if (device_count == 0)
            throw InfeasibleSpec(family_id(fam.family) + ": zero devices requested");
        if (device_count > kIpBlock)
            throw InfeasibleSpec(family_id(fam.family) + ": more than " +
                                 std::to_string(kIpBlock) + " devices per family unsupported");

        // Enumerate banner templates and their match signatures.
        std::vector<detail::BannerTemplate> templates;
        for (const auto& m : fam.models)
            for (const auto& fw : fam.firmwares)
                for (const auto& set : fam.service_sets)
                    templates.push_back(detail::BannerTemplate{m, fw, &set});
        std::vector<std::set<std::string>> signatures;
        signatures.reserve(templates.size());
        for (const auto& t : templates)
            signatures.push_back(detail::template_signature(fam.family, t, fingerprints, ruleset));

        // Sort non-zero targets by count descending (key ascending on ties)
        // and derive the prefix classes at each distinct count boundary.
        std::vector<std::pair<std::string, std::size_t>> targets;
        for (const auto& [key, count] : fam.targets) {
            if (count > device_count)
                throw InfeasibleSpec(family_id(fam.family) + ": target " + key + " (" +
                                     std::to_string(count) + ") exceeds device count " +
                                     std::to_string(device_count));
            if (count > 0) targets.emplace_back(key, count);
        }
        std::sort(targets.begin(), targets.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });

        std::vector<std::pair<std::size_t, std::size_t>> classes;  // (template idx, devices)
        std::set<std::string> prefix;
        std::size_t i = 0;
        while (i < targets.size()) {
            std::size_t count = targets[i].second;
            while (i < targets.size() && targets[i].second == count) {
                prefix.insert(targets[i].first);
                ++i;
            }
            std::size_t next = i < targets.size() ? targets[i].second : 0;
            std::size_t class_size = count - next;
            if (class_size == 0) continue;

            std::size_t chosen = templates.size();
            for (std::size_t k = 0; k < templates.size(); ++k)
                if (signatures[k] == prefix) {
                    chosen = k;
                    break;
                }
            if (chosen == templates.size()) {
                std::string keys;
                for (const auto& k : prefix) keys += (keys.empty() ? "" : ", ") + k;
                throw InfeasibleSpec(family_id(fam.family) +
                                     ": no banner template matches exactly {" + keys + "}");
            }
            classes.emplace_back(chosen, class_size);
        }

        std::size_t assigned = 0;
        for (const auto& [k, n] : classes) assigned += n;
        if (assigned < device_count) {
            // remainder must match nothing at all
            std::size_t chosen = templates.size();
            for (std::size_t k = 0; k < templates.size(); ++k)
                if (signatures[k].empty()) {
                    chosen = k;
                    break;
                }
            if (chosen == templates.size())
                throw InfeasibleSpec(family_id(fam.family) +
                                     ": no zero-finding banner template for the " +
                                     std::to_string(device_count - assigned) + " remainder devices");
            classes.emplace_back(chosen, device_count - assigned);
        }

        // Materialize. Countries fill round-robin so every class spreads over
        // the country list; totals per country are exact by quota.
        std::vector<std::size_t> quota;
        for (const auto& c : fam.countries) quota.push_back(c.count);
        std::size_t country_cursor = 0;
        auto next_country = [&]() -> std::size_t {
            for (std::size_t step = 0; step < quota.size(); ++step) {
                std::size_t idx = (country_cursor + step) % quota.size();
                if (quota[idx] > 0) {
                    quota[idx] -= 1;
                    country_cursor = (idx + 1) % quota.size();
                    return idx;
                }
            }
            throw InfeasibleSpec("country quota exhausted");  // unreachable
        };

        std::mt19937_64 rng(spec.rng_seed ^ (0x9E3779B97F4A7C15ull * (fam_idx + 1)));
        std::size_t device_idx = 0;
        for (const auto& [tmpl_idx, n] : classes) {
            for (std::size_t d = 0; d < n; ++d, ++device_idx) {
                std::size_t ci = next_country();
                std::string ip = detail::render_ipv4(
                    kIpBase + static_cast<std::uint32_t>(fam_idx * kIpBlock + device_idx));
                HostRecord h = detail::make_host(fam.family, templates[tmpl_idx], std::move(ip),
                                                 fam.countries[ci].code, fam.countries[ci].name,
                                                 base_ts + static_cast<std::int64_t>(device_idx) * 60);
                if (detail::bounded_draw(rng, 3) == 0)
                    h.org = kOrgs[detail::bounded_draw(rng, std::size(kOrgs))];
                out.push_back(std::move(h));
            }
        }
    }
    return out;
}

}  // namespace audit
