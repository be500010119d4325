#pragma once

// Minimal search-API client for the live acquisition path. Offline exports
// are the primary input; this client exists so the same pipeline can pull
// pages straight from a Shodan-compatible /shodan/host/search endpoint.
//
// Requests are single-flight and rate-limited process-wide. 429 responses are
// retried with bounded exponential backoff before giving up. The api key is
// never echoed into error messages or logs.

#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "audit/ingest.hpp"
#include "audit/model.hpp"

namespace audit {

class AuthError : public std::runtime_error {
public:
    explicit AuthError(const std::string& msg) : std::runtime_error(msg) {}
};

class RateLimited : public std::runtime_error {
public:
    explicit RateLimited(const std::string& msg) : std::runtime_error(msg) {}
};

class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ApiCredentials {
    std::string api_key;  // keep out of any serialized output
};

struct FetchOptions {
    std::string base_url = "https://api.shodan.io";
    std::size_t page_limit = 1;
    int max_retries = 3;             // additional attempts after a 429
    int initial_backoff_ms = 250;    // doubles per retry
    int request_interval_ms = 1000;  // minimum spacing between requests
};

namespace detail {

inline std::string percent_encode(std::string_view text) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                          (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.' || c == '~';
        if (unreserved) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

// Serializes all outgoing requests and enforces the minimum spacing.
inline void rate_limit_gate(int interval_ms) {
    static std::mutex gate;
    static std::chrono::steady_clock::time_point last{};
    std::lock_guard<std::mutex> lock(gate);
    auto now = std::chrono::steady_clock::now();
    auto due = last + std::chrono::milliseconds(interval_ms);
    if (last.time_since_epoch().count() != 0 && now < due)
        std::this_thread::sleep_for(due - now);
    last = std::chrono::steady_clock::now();
}

inline HostRecord host_from_search_match(const ordered_json& m) {
    if (!m.is_object() || !m.contains("ip_str") || !m["ip_str"].is_string())
        throw MalformedRecord("search match lacks ip_str");
    HostRecord h;
    h.ip = m["ip_str"].get<std::string>();
    if (m.contains("location") && m["location"].is_object()) {
        const auto& loc = m["location"];
        if (loc.contains("country_code") && loc["country_code"].is_string())
            h.country_code = loc["country_code"].get<std::string>();
        if (loc.contains("country_name") && loc["country_name"].is_string())
            h.country_name = loc["country_name"].get<std::string>();
    }
    if (m.contains("hostnames") && m["hostnames"].is_array())
        for (const auto& n : m["hostnames"])
            if (n.is_string()) h.hostnames.push_back(n.get<std::string>());
    if (m.contains("org") && m["org"].is_string()) h.org = m["org"].get<std::string>();
    if (m.contains("timestamp") && m["timestamp"].is_string())
        if (auto t = parse_timestamp(m["timestamp"].get<std::string>())) h.observed_at = *t;

    if (!m.contains("port") || !m["port"].is_number_integer())
        throw MalformedRecord("search match for " + h.ip + " lacks port");
    ServiceObservation s;
    auto port = m["port"].get<std::int64_t>();
    if (port < 1 || port > 65535) throw MalformedRecord("search match port out of range");
    s.port = static_cast<std::uint16_t>(port);
    s.transport = m.contains("transport") && m["transport"].is_string()
                      ? transport_from_string(m["transport"].get<std::string>())
                      : Transport::tcp;
    if (m.contains("data") && m["data"].is_string()) s.data = m["data"].get<std::string>();
    if (m.contains("product") && m["product"].is_string())
        s.product = m["product"].get<std::string>();
    if (m.contains("version") && m["version"].is_string())
        s.version = m["version"].get<std::string>();
    s.fields = extract_banner_fields(s.data);
    h.services.push_back(std::move(s));
    return h;
}

}  // namespace detail

/// Pulls up to `opts.page_limit` result pages for `query` and returns ip-level
/// deduplicated host records. page_limit 0 performs no request at all.
inline std::vector<HostRecord> fetch_search(const std::string& query, const ApiCredentials& creds,
                                            const FetchOptions& opts) {
    std::vector<HostRecord> records;
    if (opts.page_limit == 0) return records;

    httplib::Client client(opts.base_url);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(30, 0);

    std::size_t expected_total = 0;
    bool total_known = false;

    for (std::size_t page = 1; page <= opts.page_limit; ++page) {
        std::string path = "/shodan/host/search?key=" + detail::percent_encode(creds.api_key) +
                           "&query=" + detail::percent_encode(query) +
                           "&page=" + std::to_string(page);

        httplib::Result res;
        int backoff = opts.initial_backoff_ms;
        for (int attempt = 0;; ++attempt) {
            detail::rate_limit_gate(opts.request_interval_ms);
            res = client.Get(path);
            if (!res)
                throw TransportError("request to " + opts.base_url +
                                     "/shodan/host/search failed: " +
                                     httplib::to_string(res.error()));
            if (res->status != 429) break;
            if (attempt >= opts.max_retries)
                throw RateLimited("search API kept returning 429 after " +
                                  std::to_string(opts.max_retries + 1) + " attempts");
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }

        if (res->status == 401 || res->status == 403)
            throw AuthError("search API rejected the credentials (HTTP " +
                            std::to_string(res->status) + ")");
        if (res->status != 200)
            throw TransportError("search API returned HTTP " + std::to_string(res->status));

        ordered_json body = ordered_json::parse(res->body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("matches") ||
            !body["matches"].is_array())
            throw TransportError("search API returned an unparseable body");

        if (body.contains("total") && body["total"].is_number_integer()) {
            expected_total = static_cast<std::size_t>(body["total"].get<std::int64_t>());
            total_known = true;
        }

        const auto& matches = body["matches"];
        if (matches.empty()) break;
        for (const auto& m : matches) {
            try {
                records.push_back(detail::host_from_search_match(m));
            } catch (const MalformedRecord&) {
                // skip unusable matches, same policy as file ingest
            }
        }
        if (total_known && records.size() >= expected_total) break;
    }
    return dedup_hosts(std::move(records));
}

inline std::vector<HostRecord> fetch_search(const std::string& query, const ApiCredentials& creds,
                                            std::size_t page_limit) {
    FetchOptions opts;
    opts.page_limit = page_limit;
    return fetch_search(query, creds, opts);
}

}  // namespace audit
