#pragma once

// Canonical scan-record model shared by the ingest, fingerprint and rule
// layers: one HostRecord per IP address, carrying the observed services and
// their banners, plus the banner field-line parser.

#include <cctype>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace audit {

using ordered_json = nlohmann::ordered_json;

class MalformedRecord : public std::runtime_error {
public:
    explicit MalformedRecord(const std::string& msg) : std::runtime_error(msg) {}
};

class EmptyInput : public std::runtime_error {
public:
    explicit EmptyInput(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Transport { tcp, udp };

inline std::string to_string(Transport t) { return t == Transport::tcp ? "tcp" : "udp"; }

inline Transport transport_from_string(std::string_view s) {
    if (s == "tcp") return Transport::tcp;
    if (s == "udp") return Transport::udp;
    throw MalformedRecord("unknown transport \"" + std::string(s) + "\"");
}

// ---------------------------------------------------------------------------
// Banner field lines

/// Ordered multimap of "Key: Value" lines pulled out of a banner. Keys keep
/// their original casing; lookup is case-insensitive; duplicates stay in
/// banner order.
struct FieldMap {
    std::vector<std::pair<std::string, std::string>> entries;

    static bool key_equals(std::string_view a, std::string_view b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::tolower(static_cast<unsigned char>(a[i])) !=
                std::tolower(static_cast<unsigned char>(b[i])))
                return false;
        return true;
    }

    std::optional<std::string_view> first(std::string_view key) const {
        for (const auto& [k, v] : entries)
            if (key_equals(k, key)) return std::string_view(v);
        return std::nullopt;
    }

    std::vector<std::string_view> values(std::string_view key) const {
        std::vector<std::string_view> out;
        for (const auto& [k, v] : entries)
            if (key_equals(k, key)) out.emplace_back(v);
        return out;
    }

    bool value_contains(std::string_view key, std::string_view needle) const {
        for (const auto& [k, v] : entries)
            if (key_equals(k, key) && v.find(needle) != std::string::npos) return true;
        return false;
    }

    bool empty() const { return entries.empty(); }
};

/// Pulls every line of the form `<key> ":" <space>* <value>` out of a raw
/// banner. Lines without a colon are skipped; the function is total and never
/// fails. The key is everything before the first colon (must be non-empty),
/// the value is the remainder with leading spaces stripped.
inline FieldMap extract_banner_fields(std::string_view raw_banner) {
    FieldMap out;
    std::size_t pos = 0;
    while (pos <= raw_banner.size()) {
        std::size_t eol = raw_banner.find('\n', pos);
        std::string_view line =
            raw_banner.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::size_t colon = line.find(':');
        if (colon != std::string_view::npos && colon > 0) {
            std::string_view key = line.substr(0, colon);
            std::string_view value = line.substr(colon + 1);
            while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
            out.entries.emplace_back(std::string(key), std::string(value));
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Host records

struct ServiceObservation {
    Transport transport = Transport::tcp;
    std::uint16_t port = 0;
    std::string data;  // raw banner bytes
    std::optional<std::string> product;
    std::optional<std::string> version;
    FieldMap fields;  // always re-derivable from data via extract_banner_fields
};

struct HostRecord {
    std::string ip;
    std::string country_code = "ZZ";
    std::string country_name = "Unknown";
    std::vector<std::string> hostnames;
    std::optional<std::string> org;
    std::int64_t observed_at = 0;  // UTC seconds since epoch
    std::vector<ServiceObservation> services;
    std::optional<bool> honeypot;  // pass-through only, never interpreted

    const ServiceObservation* find_service(Transport t, std::uint16_t port) const {
        for (const auto& s : services)
            if (s.transport == t && s.port == port) return &s;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Timestamps (ISO-8601 UTC, "2020-04-14T00:00:00Z")

namespace detail {

// Days from civil date algorithm (Howard Hinnant's chrono paper).
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y = static_cast<int>(yy + (m <= 2));
}

}  // namespace detail

/// Parses "YYYY-MM-DDTHH:MM:SS" with optional fractional seconds and optional
/// trailing "Z". Returns UTC seconds; fractional part is dropped. Returns
/// nullopt when the text does not fit the shape.
inline std::optional<std::int64_t> parse_timestamp(std::string_view text) {
    auto digits = [&](std::size_t at, std::size_t count) -> std::optional<int> {
        if (at + count > text.size()) return std::nullopt;
        int out = 0;
        for (std::size_t i = at; i < at + count; ++i) {
            char c = text[i];
            if (c < '0' || c > '9') return std::nullopt;
            out = out * 10 + (c - '0');
        }
        return out;
    };
    auto expect = [&](std::size_t at, char c) { return at < text.size() && text[at] == c; };

    auto y = digits(0, 4);
    auto mo = digits(5, 2);
    auto d = digits(8, 2);
    auto h = digits(11, 2);
    auto mi = digits(14, 2);
    auto s = digits(17, 2);
    if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
    if (!expect(4, '-') || !expect(7, '-') || !expect(10, 'T') || !expect(13, ':') ||
        !expect(16, ':'))
        return std::nullopt;
    if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31 || *h > 23 || *mi > 59 || *s > 60)
        return std::nullopt;

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
    }
    if (pos < text.size() && text[pos] == 'Z') ++pos;
    if (pos != text.size()) return std::nullopt;

    return detail::days_from_civil(*y, *mo, *d) * 86400 + *h * 3600 + *mi * 60 + *s;
}

inline std::string render_timestamp(std::int64_t seconds) {
    std::int64_t days = seconds / 86400;
    std::int64_t rem = seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    int y;
    unsigned mo, d;
    detail::civil_from_days(days, y, mo, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, mo, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// Canonical JSON (one NDJSON line per host)

inline ordered_json host_to_json(const HostRecord& h) {
    ordered_json j;
    j["ip_str"] = h.ip;
    j["location"] = ordered_json{{"country_code", h.country_code}, {"country_name", h.country_name}};
    j["hostnames"] = h.hostnames;
    if (h.org) j["org"] = *h.org;
    j["timestamp"] = render_timestamp(h.observed_at);
    ordered_json services = ordered_json::array();
    for (const auto& s : h.services) {
        ordered_json sj;
        sj["transport"] = to_string(s.transport);
        sj["port"] = s.port;
        sj["data"] = s.data;
        if (s.product) sj["product"] = *s.product;
        if (s.version) sj["version"] = *s.version;
        services.push_back(std::move(sj));
    }
    j["services"] = std::move(services);
    if (h.honeypot) j["honeypot"] = *h.honeypot;
    return j;
}

inline HostRecord host_from_json(const ordered_json& j) {
    if (!j.is_object()) throw MalformedRecord("record is not a JSON object");
    if (!j.contains("ip_str") || !j["ip_str"].is_string() || j["ip_str"].get<std::string>().empty())
        throw MalformedRecord("record lacks ip_str");

    HostRecord h;
    h.ip = j["ip_str"].get<std::string>();

    if (j.contains("location") && j["location"].is_object()) {
        const auto& loc = j["location"];
        if (loc.contains("country_code") && loc["country_code"].is_string())
            h.country_code = loc["country_code"].get<std::string>();
        if (loc.contains("country_name") && loc["country_name"].is_string())
            h.country_name = loc["country_name"].get<std::string>();
    }
    if (j.contains("hostnames") && j["hostnames"].is_array())
        for (const auto& n : j["hostnames"])
            if (n.is_string()) h.hostnames.push_back(n.get<std::string>());
    if (j.contains("org") && j["org"].is_string()) h.org = j["org"].get<std::string>();
    if (j.contains("timestamp") && j["timestamp"].is_string())
        if (auto t = parse_timestamp(j["timestamp"].get<std::string>())) h.observed_at = *t;
    if (j.contains("honeypot") && j["honeypot"].is_boolean()) h.honeypot = j["honeypot"].get<bool>();

    if (!j.contains("services") || !j["services"].is_array() || j["services"].empty())
        throw MalformedRecord("record for " + h.ip + " lacks services");
    for (const auto& sj : j["services"]) {
        if (!sj.is_object() || !sj.contains("transport") || !sj.contains("port"))
            throw MalformedRecord("service entry for " + h.ip + " lacks transport/port");
        ServiceObservation s;
        if (!sj["transport"].is_string())
            throw MalformedRecord("service transport for " + h.ip + " is not a string");
        s.transport = transport_from_string(sj["transport"].get<std::string>());
        if (!sj["port"].is_number_integer())
            throw MalformedRecord("service port for " + h.ip + " is not an integer");
        auto port = sj["port"].get<std::int64_t>();
        if (port < 1 || port > 65535)
            throw MalformedRecord("service port " + std::to_string(port) + " out of range for " + h.ip);
        s.port = static_cast<std::uint16_t>(port);
        if (sj.contains("data") && sj["data"].is_string()) s.data = sj["data"].get<std::string>();
        if (sj.contains("product") && sj["product"].is_string())
            s.product = sj["product"].get<std::string>();
        if (sj.contains("version") && sj["version"].is_string())
            s.version = sj["version"].get<std::string>();
        s.fields = extract_banner_fields(s.data);

        // One observation per (transport, port); a duplicate inside a single
        // record keeps the later entry.
        bool replaced = false;
        for (auto& existing : h.services)
            if (existing.transport == s.transport && existing.port == s.port) {
                existing = s;
                replaced = true;
                break;
            }
        if (!replaced) h.services.push_back(std::move(s));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Device families

enum class DeviceFamily {
    unknown,
    schneider_bmx_p34,
    siemens_s7_300,
    omron_cj_cs,
    rockwell_micrologix_1400,
    mitsubishi_melsec_q,
};

inline std::string family_id(DeviceFamily f) {
    switch (f) {
        case DeviceFamily::schneider_bmx_p34: return "schneider_bmx_p34";
        case DeviceFamily::siemens_s7_300: return "siemens_s7_300";
        case DeviceFamily::omron_cj_cs: return "omron_cj_cs";
        case DeviceFamily::rockwell_micrologix_1400: return "rockwell_micrologix_1400";
        case DeviceFamily::mitsubishi_melsec_q: return "mitsubishi_melsec_q";
        case DeviceFamily::unknown: break;
    }
    return "unknown";
}

inline DeviceFamily family_from_id(std::string_view id) {
    if (id == "schneider_bmx_p34") return DeviceFamily::schneider_bmx_p34;
    if (id == "siemens_s7_300") return DeviceFamily::siemens_s7_300;
    if (id == "omron_cj_cs") return DeviceFamily::omron_cj_cs;
    if (id == "rockwell_micrologix_1400") return DeviceFamily::rockwell_micrologix_1400;
    if (id == "mitsubishi_melsec_q") return DeviceFamily::mitsubishi_melsec_q;
    return DeviceFamily::unknown;
}

inline std::string family_display_name(DeviceFamily f) {
    switch (f) {
        case DeviceFamily::schneider_bmx_p34: return "Schneider Electric BMX P34";
        case DeviceFamily::siemens_s7_300: return "Siemens SIMATIC S7-300";
        case DeviceFamily::omron_cj_cs: return "Omron CJ/CS";
        case DeviceFamily::rockwell_micrologix_1400: return "Rockwell MicroLogix 1400";
        case DeviceFamily::mitsubishi_melsec_q: return "Mitsubishi MELSEC-Q";
        case DeviceFamily::unknown: break;
    }
    return "Unknown";
}

}  // namespace audit
