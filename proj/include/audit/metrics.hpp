#pragma once

// Analytics over device assessments: per-country aggregation, per-CVE (or
// per-cluster) prevalence, inter-family comparison, per-device statistics and
// open-port frequency.
//
// Percent columns keep full precision here so that they still sum to exactly
// 100 across rows; the rendering layer rounds half-up to two decimals for
// display.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "audit/model.hpp"
#include "audit/rules.hpp"

namespace audit {

inline double round_half_up(double value, int decimals) {
    double scale = std::pow(10.0, decimals);
    return static_cast<double>(std::llround(value * scale)) / scale;
}

inline constexpr std::array<char, 6> kStrideOrder = {'S', 'T', 'R', 'I', 'D', 'E'};

// ---------------------------------------------------------------------------
// Country aggregation

struct CountryRow {
    std::string country_code;
    std::string country_name;
    std::size_t dev_abs = 0;
    double dev_rel = 0.0;
    std::size_t cve_abs = 0;
    double cve_rel = 0.0;
    double weighted_abs = 0.0;
    double weighted_rel = 0.0;
};

struct CountryTable {
    std::vector<CountryRow> rows;  // all countries, dev_abs desc, ties code asc
    std::size_t top_k = 10;
    CountryRow top_k_sums;  // aggregate over the first top_k rows
    CountryRow total_sums;  // aggregate over every row
};

inline CountryTable aggregate_by_country(const std::vector<DeviceAssessment>& assessments,
                                         std::size_t top_k = 10) {
    struct Bucket {
        std::string name;
        std::size_t dev = 0;
        std::size_t cve = 0;
        double weighted = 0.0;
    };
    std::map<std::string, Bucket> buckets;
    for (const auto& a : assessments) {
        Bucket& b = buckets[a.country_code];
        if (b.name.empty()) b.name = a.country_name;
        b.dev += 1;
        b.cve += a.findings.size();
        for (const auto& f : a.findings) b.weighted += f.score_used;
    }

    CountryTable out;
    out.top_k = top_k;
    std::size_t total_dev = 0, total_cve = 0;
    double total_weighted = 0.0;
    for (const auto& [code, b] : buckets) {
        total_dev += b.dev;
        total_cve += b.cve;
        total_weighted += b.weighted;
    }

    for (const auto& [code, b] : buckets) {
        CountryRow r;
        r.country_code = code;
        r.country_name = b.name;
        r.dev_abs = b.dev;
        r.cve_abs = b.cve;
        r.weighted_abs = b.weighted;
        out.rows.push_back(std::move(r));
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const CountryRow& a, const CountryRow& b) {
        if (a.dev_abs != b.dev_abs) return a.dev_abs > b.dev_abs;
        return a.country_code < b.country_code;
    });

    auto fill_rel = [&](CountryRow& r) {
        if (total_dev) r.dev_rel = 100.0 * static_cast<double>(r.dev_abs) / static_cast<double>(total_dev);
        if (total_cve) r.cve_rel = 100.0 * static_cast<double>(r.cve_abs) / static_cast<double>(total_cve);
        if (total_weighted > 0.0) r.weighted_rel = 100.0 * r.weighted_abs / total_weighted;
    };
    for (auto& r : out.rows) fill_rel(r);

    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        if (i < top_k) {
            out.top_k_sums.dev_abs += out.rows[i].dev_abs;
            out.top_k_sums.cve_abs += out.rows[i].cve_abs;
            out.top_k_sums.weighted_abs += out.rows[i].weighted_abs;
        }
        out.total_sums.dev_abs += out.rows[i].dev_abs;
        out.total_sums.cve_abs += out.rows[i].cve_abs;
        out.total_sums.weighted_abs += out.rows[i].weighted_abs;
    }
    fill_rel(out.top_k_sums);
    fill_rel(out.total_sums);
    return out;
}

// ---------------------------------------------------------------------------
// Prevalence

struct PrevalenceRow {
    std::string key;  // "Cluster N" for multi-member clusters, else the CVE id
    std::size_t occ_abs = 0;
    double occ_rel = 0.0;  // percent of all family devices, zero-finding ones included
    std::string stride;    // union of member letters, canonical STRIDE order
};

namespace detail {

inline std::string stride_union(const std::vector<const CveRule*>& rules) {
    std::array<bool, 6> present{};
    for (const CveRule* r : rules)
        for (char c : stride_letters(r->stride))
            for (std::size_t i = 0; i < kStrideOrder.size(); ++i)
                if (kStrideOrder[i] == c) present[i] = true;
    std::string out;
    for (std::size_t i = 0; i < kStrideOrder.size(); ++i)
        if (present[i]) {
            if (!out.empty()) out.push_back('/');
            out.push_back(kStrideOrder[i]);
        }
    return out;
}

}  // namespace detail

inline std::vector<PrevalenceRow> cve_prevalence(const std::vector<DeviceAssessment>& assessments,
                                                 const RuleSet& ruleset) {
    std::size_t total = assessments.size();
    std::vector<PrevalenceRow> out;

    for (const auto& cl : ruleset.clusters) {
        PrevalenceRow row;
        row.key = cl.members.size() == 1 ? cl.members.front() : "Cluster " + cl.id;
        std::vector<const CveRule*> members;
        for (const auto& cve : cl.members) members.push_back(ruleset.find_rule(cve));
        row.stride = detail::stride_union(members);
        for (const auto& a : assessments)
            for (const auto& f : a.findings)
                if (f.cluster_id && *f.cluster_id == cl.id) {
                    row.occ_abs += 1;
                    break;
                }
        out.push_back(std::move(row));
    }
    for (const auto& r : ruleset.rules) {
        if (r.cluster_id) continue;
        PrevalenceRow row;
        row.key = r.cve_id;
        row.stride = detail::stride_union({&r});
        for (const auto& a : assessments)
            for (const auto& f : a.findings)
                if (f.cve_id == r.cve_id) {
                    row.occ_abs += 1;
                    break;
                }
        out.push_back(std::move(row));
    }

    for (auto& row : out)
        if (total) row.occ_rel = 100.0 * static_cast<double>(row.occ_abs) / static_cast<double>(total);
    std::sort(out.begin(), out.end(), [](const PrevalenceRow& a, const PrevalenceRow& b) {
        if (a.occ_abs != b.occ_abs) return a.occ_abs > b.occ_abs;
        return a.key < b.key;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Inter-family comparison

struct ComparisonRow {
    DeviceFamily family = DeviceFamily::unknown;
    std::size_t dev_abs = 0;
    double dev_rel = 0.0;  // share of all assessed devices
    std::array<double, 6> class_prevalence{};  // S,T,R,I,D,E percent of family devices
    std::size_t cve_abs = 0;
    double cve_rel = 0.0;
    double weighted_abs = 0.0;
    double weighted_rel = 0.0;
    double mean_cvss = 0.0;  // weighted_abs / cve_abs, full precision
};

inline std::vector<ComparisonRow> family_comparison(const std::vector<DeviceAssessment>& assessments) {
    static const DeviceFamily kOrder[] = {
        DeviceFamily::schneider_bmx_p34,       DeviceFamily::siemens_s7_300,
        DeviceFamily::omron_cj_cs,             DeviceFamily::rockwell_micrologix_1400,
        DeviceFamily::mitsubishi_melsec_q,
    };

    std::size_t total_dev = assessments.size();
    std::size_t total_cve = 0;
    double total_weighted = 0.0;
    for (const auto& a : assessments) {
        total_cve += a.findings.size();
        for (const auto& f : a.findings) total_weighted += f.score_used;
    }

    std::vector<ComparisonRow> out;
    for (DeviceFamily fam : kOrder) {
        ComparisonRow row;
        row.family = fam;
        std::array<std::size_t, 6> letter_devices{};
        for (const auto& a : assessments) {
            if (a.family != fam) continue;
            row.dev_abs += 1;
            row.cve_abs += a.findings.size();
            std::array<bool, 6> seen{};
            for (const auto& f : a.findings) {
                row.weighted_abs += f.score_used;
                for (char c : stride_letters(f.stride))
                    for (std::size_t i = 0; i < kStrideOrder.size(); ++i)
                        if (kStrideOrder[i] == c) seen[i] = true;
            }
            for (std::size_t i = 0; i < seen.size(); ++i)
                if (seen[i]) letter_devices[i] += 1;
        }
        if (row.dev_abs == 0) continue;

        if (total_dev) row.dev_rel = 100.0 * static_cast<double>(row.dev_abs) / static_cast<double>(total_dev);
        if (total_cve) row.cve_rel = 100.0 * static_cast<double>(row.cve_abs) / static_cast<double>(total_cve);
        if (total_weighted > 0.0) row.weighted_rel = 100.0 * row.weighted_abs / total_weighted;
        for (std::size_t i = 0; i < letter_devices.size(); ++i)
            row.class_prevalence[i] =
                100.0 * static_cast<double>(letter_devices[i]) / static_cast<double>(row.dev_abs);
        if (row.cve_abs) row.mean_cvss = row.weighted_abs / static_cast<double>(row.cve_abs);
        out.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-device statistics

struct DeviceStats {
    double mean_findings_per_device = 0.0;
    double median_findings_per_device = 0.0;
    double min_findings = 0.0;
    double max_findings = 0.0;
    double variance = 0.0;  // population variance
};

inline DeviceStats per_device_stats(const std::vector<DeviceAssessment>& assessments) {
    DeviceStats out;
    if (assessments.empty()) return out;

    std::vector<std::size_t> counts;
    counts.reserve(assessments.size());
    std::size_t total = 0;
    for (const auto& a : assessments) {
        counts.push_back(a.findings.size());
        total += a.findings.size();
    }
    std::sort(counts.begin(), counts.end());

    std::size_t n = counts.size();
    out.mean_findings_per_device = static_cast<double>(total) / static_cast<double>(n);
    out.median_findings_per_device = static_cast<double>(counts[(n - 1) / 2]);  // lower middle
    out.min_findings = static_cast<double>(counts.front());
    out.max_findings = static_cast<double>(counts.back());
    double mu = out.mean_findings_per_device;
    double ss = 0.0;
    for (std::size_t c : counts) {
        double d = static_cast<double>(c) - mu;
        ss += d * d;
    }
    out.variance = ss / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Port frequency

struct PortFrequencyRow {
    Transport transport = Transport::tcp;
    std::uint16_t port = 0;
    std::size_t host_abs = 0;
    double host_rel = 0.0;  // percent of all hosts
};

inline std::vector<PortFrequencyRow> port_frequency(const std::vector<HostRecord>& hosts) {
    std::map<std::pair<std::uint16_t, int>, std::size_t> counts;  // (port, transport) → hosts
    for (const auto& h : hosts)
        for (const auto& s : h.services) counts[{s.port, static_cast<int>(s.transport)}] += 1;

    std::vector<PortFrequencyRow> out;
    for (const auto& [key, count] : counts) {
        PortFrequencyRow row;
        row.port = key.first;
        row.transport = static_cast<Transport>(key.second);
        row.host_abs = count;
        if (!hosts.empty())
            row.host_rel = 100.0 * static_cast<double>(count) / static_cast<double>(hosts.size());
        out.push_back(row);
    }
    std::sort(out.begin(), out.end(), [](const PortFrequencyRow& a, const PortFrequencyRow& b) {
        if (a.host_abs != b.host_abs) return a.host_abs > b.host_abs;
        if (a.port != b.port) return a.port < b.port;
        return static_cast<int>(a.transport) < static_cast<int>(b.transport);
    });
    return out;
}

}  // namespace audit
