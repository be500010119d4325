#pragma once

// NDJSON export ingest: one JSON host record per line, optionally gzip
// compressed (sniffed by magic bytes). Records are deduplicated by IP; scan
// exports routinely contain several observations of the same host.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "audit/model.hpp"

namespace audit {

inline HostRecord parse_host_record(std::string_view line) {
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded()) throw MalformedRecord("invalid JSON");
    return host_from_json(j);
}

struct LoadResult {
    std::vector<HostRecord> hosts;
    std::size_t lines_seen = 0;       // non-blank lines
    std::size_t malformed_lines = 0;  // skipped, never fatal
};

namespace detail {

inline bool is_gzip(std::string_view bytes) {
    return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1F &&
           static_cast<unsigned char>(bytes[1]) == 0x8B;
}

inline std::string gunzip(std::string_view compressed) {
    z_stream strm{};
    if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK)
        throw MalformedRecord("zlib initialisation failed");

    std::string out;
    strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    strm.avail_in = static_cast<uInt>(compressed.size());
    char chunk[65536];
    int rc = Z_OK;
    do {
        strm.next_out = reinterpret_cast<Bytef*>(chunk);
        strm.avail_out = sizeof(chunk);
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw MalformedRecord("gzip stream corrupt (zlib rc " + std::to_string(rc) + ")");
        }
        out.append(chunk, sizeof(chunk) - strm.avail_out);
        if (rc == Z_STREAM_END && strm.avail_in > 0) {
            // concatenated gzip members
            if (inflateReset2(&strm, 16 + MAX_WBITS) != Z_OK) break;
            rc = Z_OK;
        }
    } while (rc != Z_STREAM_END);
    inflateEnd(&strm);
    return out;
}

inline bool blank_line(std::string_view line) {
    for (char c : line)
        if (c != ' ' && c != '\t' && c != '\r') return false;
    return true;
}

// Merge a later observation of the same host. Per (transport, port) the
// service from the record with the later timestamp wins; on a timestamp tie
// the record seen later in the stream wins. Host-level fields follow the same
// later-wins rule.
struct MergedHost {
    HostRecord host;
    std::int64_t host_ts = 0;
    std::map<std::pair<int, std::uint16_t>, std::int64_t> service_ts;
};

inline void merge_host(MergedHost& slot, HostRecord&& incoming) {
    std::int64_t ts = incoming.observed_at;
    if (slot.host.ip.empty()) {
        slot.host = std::move(incoming);
        slot.host_ts = ts;
        for (const auto& s : slot.host.services)
            slot.service_ts[{static_cast<int>(s.transport), s.port}] = ts;
        return;
    }

    for (auto& s : incoming.services) {
        auto key = std::make_pair(static_cast<int>(s.transport), s.port);
        auto it = slot.service_ts.find(key);
        if (it == slot.service_ts.end()) {
            slot.host.services.push_back(std::move(s));
            slot.service_ts[key] = ts;
        } else if (ts >= it->second) {
            for (auto& existing : slot.host.services)
                if (static_cast<int>(existing.transport) == key.first && existing.port == key.second) {
                    existing = std::move(s);
                    break;
                }
            it->second = ts;
        }
    }
    if (ts >= slot.host_ts) {
        slot.host.country_code = incoming.country_code;
        slot.host.country_name = incoming.country_name;
        slot.host.hostnames = incoming.hostnames;
        slot.host.org = incoming.org;
        slot.host.honeypot = incoming.honeypot;
        slot.host.observed_at = ts;
        slot.host_ts = ts;
    }
}

}  // namespace detail

/// Parses a whole export held in memory. Malformed lines are counted and
/// skipped. Throws EmptyInput when at least one non-blank line was present but
/// none parsed; an empty stream simply yields an empty list.
inline LoadResult load_export_text(std::string_view text) {
    if (detail::is_gzip(text)) {
        std::string inflated = detail::gunzip(text);
        return load_export_text(inflated);
    }

    LoadResult out;
    std::vector<std::string> order;                       // ips in first-seen order
    std::map<std::string, detail::MergedHost> by_ip;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        if (eol == std::string_view::npos && line.empty()) break;
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        if (detail::blank_line(line)) continue;

        ++out.lines_seen;
        try {
            HostRecord rec = parse_host_record(line);
            auto [it, inserted] = by_ip.try_emplace(rec.ip);
            if (inserted) order.push_back(rec.ip);
            detail::merge_host(it->second, std::move(rec));
        } catch (const MalformedRecord&) {
            ++out.malformed_lines;
        }
    }

    if (out.lines_seen > 0 && by_ip.empty())
        throw EmptyInput("no valid records in " + std::to_string(out.lines_seen) + " lines");

    out.hosts.reserve(order.size());
    for (const auto& ip : order) out.hosts.push_back(std::move(by_ip.at(ip).host));
    return out;
}

/// Same ip-merge the NDJSON loader applies, for records that are already
/// parsed (the live client funnels its page results through this).
inline std::vector<HostRecord> dedup_hosts(std::vector<HostRecord> records) {
    std::vector<std::string> order;
    std::map<std::string, detail::MergedHost> by_ip;
    for (auto& rec : records) {
        auto [it, inserted] = by_ip.try_emplace(rec.ip);
        if (inserted) order.push_back(rec.ip);
        detail::merge_host(it->second, std::move(rec));
    }
    std::vector<HostRecord> out;
    out.reserve(order.size());
    for (const auto& ip : order) out.push_back(std::move(by_ip.at(ip).host));
    return out;
}

inline LoadResult load_export(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    return load_export_text(text);
}

inline LoadResult load_export_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open export file: " + path.string());
    return load_export(in);
}

inline void write_ndjson(const std::vector<HostRecord>& hosts, std::ostream& out) {
    for (const auto& h : hosts) out << host_to_json(h).dump() << '\n';
}

inline std::string render_ndjson(const std::vector<HostRecord>& hosts) {
    std::ostringstream out;
    write_ndjson(hosts, out);
    return out.str();
}

}  // namespace audit
