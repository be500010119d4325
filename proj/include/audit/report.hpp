#pragma once

// Report assembly and rendering (CSV, JSON, Markdown).
//
// All three renderers are byte-deterministic: fixed column orders, fixed key
// orders, explicit decimal formatting (half-up, matching the analytics
// layer's display rounding). CSV is RFC 4180 with LF line endings; multiple
// tables in one CSV stream are separated by "# <table id>" comment lines.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "audit/fingerprint.hpp"
#include "audit/ingest.hpp"
#include "audit/metrics.hpp"
#include "audit/model.hpp"
#include "audit/rules.hpp"

namespace audit {

enum class OutputFormat { csv, json, md };

inline OutputFormat output_format_from_string(std::string_view s) {
    if (s == "csv") return OutputFormat::csv;
    if (s == "json") return OutputFormat::json;
    if (s == "md") return OutputFormat::md;
    throw ValidationError("unknown output format \"" + std::string(s) + "\"");
}

/// Fixed-point rendering with half-up rounding ("32.48", "73436.3").
inline std::string format_fixed(double value, int decimals) {
    long long scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    long long scaled = std::llround(value * static_cast<double>(scale));
    bool negative = scaled < 0;
    if (negative) scaled = -scaled;
    std::string out = std::to_string(scaled / scale);
    if (decimals > 0) {
        std::string digits = std::to_string(scaled % scale);
        out += "." + std::string(static_cast<std::size_t>(decimals) - digits.size(), '0') + digits;
    }
    return negative ? "-" + out : out;
}

// ---------------------------------------------------------------------------
// Assessment pipeline

struct AssessedCorpus {
    std::vector<DeviceAssessment> assessments;  // fingerprinted hosts only
    std::map<DeviceFamily, std::vector<HostRecord>> hosts_by_family;
    std::size_t unknown_hosts = 0;
    std::size_t ambiguous_hosts = 0;  // hosts matching more than one fingerprint
};

inline AssessedCorpus assess_hosts(const std::vector<HostRecord>& hosts,
                                   const FingerprintSet& fingerprints,
                                   const std::map<DeviceFamily, RuleSet>& rulesets) {
    AssessedCorpus out;
    for (const auto& h : hosts) {
        IdentifyResult id;
        DeviceProfile profile = build_profile(h, fingerprints, &id);
        if (!id.also_matched.empty()) ++out.ambiguous_hosts;
        if (profile.family == DeviceFamily::unknown) {
            ++out.unknown_hosts;
            continue;
        }
        auto rs = rulesets.find(profile.family);
        if (rs == rulesets.end()) {
            ++out.unknown_hosts;  // fingerprint without rules: cannot assess
            continue;
        }
        out.hosts_by_family[profile.family].push_back(h);
        out.assessments.push_back(match_cves(profile, rs->second));
    }
    return out;
}

struct FamilyReport {
    DeviceFamily family = DeviceFamily::unknown;
    std::size_t device_count = 0;
    CountryTable countries;
    std::vector<PrevalenceRow> prevalence;
    DeviceStats stats;
    std::vector<PortFrequencyRow> ports;
};

struct Report {
    std::vector<FamilyReport> families;  // ascending family enum order
    std::vector<ComparisonRow> comparison;
};

inline Report build_report(const AssessedCorpus& corpus,
                           const std::map<DeviceFamily, RuleSet>& rulesets, std::size_t top_k) {
    Report out;
    for (const auto& [family, hosts] : corpus.hosts_by_family) {
        FamilyReport fr;
        fr.family = family;
        std::vector<DeviceAssessment> fam_assessments;
        for (const auto& a : corpus.assessments)
            if (a.family == family) fam_assessments.push_back(a);
        fr.device_count = fam_assessments.size();
        fr.countries = aggregate_by_country(fam_assessments, top_k);
        fr.prevalence = cve_prevalence(fam_assessments, rulesets.at(family));
        fr.stats = per_device_stats(fam_assessments);
        fr.ports = port_frequency(hosts);
        out.families.push_back(std::move(fr));
    }
    out.comparison = family_comparison(corpus.assessments);
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_escape(const std::string& field) {
    bool needs_quote = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quote) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline void csv_row(std::ostringstream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(cells[i]);
    }
    out << '\n';
}

inline void md_row(std::ostringstream& out, const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells) out << ' ' << c << " |";
    out << '\n';
}

inline void md_header(std::ostringstream& out, const std::vector<std::string>& cells) {
    md_row(out, cells);
    out << '|';
    for (std::size_t i = 0; i < cells.size(); ++i) out << " --- |";
    out << '\n';
}

}  // namespace detail

// Generic table snapshot used by the CSV and Markdown emitters.
struct TextTable {
    std::string id;     // machine-friendly ("country_distribution schneider_bmx_p34")
    std::string title;  // human heading
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline std::string emit_table(const TextTable& t, OutputFormat format) {
    std::ostringstream out;
    if (format == OutputFormat::csv) {
        detail::csv_row(out, t.columns);
        for (const auto& r : t.rows) detail::csv_row(out, r);
    } else if (format == OutputFormat::md) {
        out << "## " << t.title << "\n\n";
        detail::md_header(out, t.columns);
        for (const auto& r : t.rows) detail::md_row(out, r);
    } else {
        throw ValidationError("emit_table renders csv or md; use report_to_json for json");
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Table snapshots

inline TextTable country_text_table(const CountryTable& table, DeviceFamily family,
                                    OutputFormat format) {
    TextTable t;
    t.id = "country_distribution " + family_id(family);
    t.title = "Country distribution: " + family_display_name(family);
    bool csv = format == OutputFormat::csv;
    if (csv)
        t.columns = {"country_code", "country_name", "dev_abs", "dev_rel", "cve_abs",
                     "cve_rel",      "weighted_abs", "weighted_rel"};
    else
        t.columns = {"Country", "Devices", "Devices %", "CVEs", "CVEs %", "Weighted", "Weighted %"};

    auto push = [&](const std::string& code, const std::string& name, const CountryRow& r) {
        std::vector<std::string> cells;
        if (csv) {
            cells = {code, name};
        } else if (name.empty()) {
            cells = {code};
        } else {
            cells = {code.empty() ? name : name + " (" + code + ")"};
        }
        cells.push_back(std::to_string(r.dev_abs));
        cells.push_back(format_fixed(r.dev_rel, 2));
        cells.push_back(std::to_string(r.cve_abs));
        cells.push_back(format_fixed(r.cve_rel, 2));
        cells.push_back(format_fixed(r.weighted_abs, 1));
        cells.push_back(format_fixed(r.weighted_rel, 2));
        t.rows.push_back(std::move(cells));
    };

    std::size_t shown = std::min(table.top_k, table.rows.size());
    for (std::size_t i = 0; i < shown; ++i)
        push(table.rows[i].country_code, table.rows[i].country_name, table.rows[i]);
    if (!table.rows.empty()) {
        push("", "Top-" + std::to_string(table.top_k), table.top_k_sums);
        push("", "Total", table.total_sums);
    }
    return t;
}

inline TextTable prevalence_text_table(const std::vector<PrevalenceRow>& rows, DeviceFamily family,
                                       OutputFormat format) {
    TextTable t;
    t.id = "cve_prevalence " + family_id(family);
    t.title = "Vulnerability prevalence: " + family_display_name(family);
    t.columns = format == OutputFormat::csv
                    ? std::vector<std::string>{"key", "occ_abs", "occ_rel", "stride"}
                    : std::vector<std::string>{"CVE / Cluster", "Occurrences", "%", "STRIDE"};
    for (const auto& r : rows)
        t.rows.push_back({r.key, std::to_string(r.occ_abs), format_fixed(r.occ_rel, 2), r.stride});
    return t;
}

inline TextTable stats_text_table(const DeviceStats& s, DeviceFamily family, OutputFormat format) {
    TextTable t;
    t.id = "device_stats " + family_id(family);
    t.title = "Findings per device: " + family_display_name(family);
    t.columns = format == OutputFormat::csv
                    ? std::vector<std::string>{"mean", "median", "min", "max", "variance"}
                    : std::vector<std::string>{"Mean", "Median", "Min", "Max", "Variance"};
    t.rows.push_back({format_fixed(s.mean_findings_per_device, 2),
                      format_fixed(s.median_findings_per_device, 2), format_fixed(s.min_findings, 0),
                      format_fixed(s.max_findings, 0), format_fixed(s.variance, 2)});
    return t;
}

inline TextTable ports_text_table(const std::vector<PortFrequencyRow>& rows, DeviceFamily family,
                                  OutputFormat format) {
    TextTable t;
    t.id = "port_frequency " + family_id(family);
    t.title = "Open ports: " + family_display_name(family);
    t.columns = format == OutputFormat::csv
                    ? std::vector<std::string>{"transport", "port", "host_abs", "host_rel"}
                    : std::vector<std::string>{"Transport", "Port", "Hosts", "%"};
    for (const auto& r : rows)
        t.rows.push_back({to_string(r.transport), std::to_string(r.port), std::to_string(r.host_abs),
                          format_fixed(r.host_rel, 2)});
    return t;
}

inline TextTable comparison_text_table(const std::vector<ComparisonRow>& rows, OutputFormat format) {
    TextTable t;
    t.id = "family_comparison";
    t.title = "Family comparison";
    bool csv = format == OutputFormat::csv;
    if (csv)
        t.columns = {"family", "dev_abs", "dev_rel", "S", "T", "R", "I", "D", "E",
                     "cve_abs", "cve_rel", "weighted_abs", "weighted_rel", "mean_cvss"};
    else
        t.columns = {"Family", "Devices", "Dev %", "S", "T", "R", "I", "D", "E",
                     "CVEs", "CVE %", "Weighted", "Weighted %", "Mean CVSS"};
    for (const auto& r : rows) {
        std::vector<std::string> cells;
        cells.push_back(csv ? family_id(r.family) : family_display_name(r.family));
        cells.push_back(std::to_string(r.dev_abs));
        cells.push_back(format_fixed(r.dev_rel, 2));
        for (double p : r.class_prevalence) cells.push_back(format_fixed(p, 2));
        cells.push_back(std::to_string(r.cve_abs));
        cells.push_back(format_fixed(r.cve_rel, 2));
        cells.push_back(format_fixed(r.weighted_abs, 1));
        cells.push_back(format_fixed(r.weighted_rel, 2));
        cells.push_back(format_fixed(r.mean_cvss, 2));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Whole-report rendering

inline ordered_json report_to_json(const Report& report) {
    ordered_json doc;
    doc["families"] = ordered_json::array();
    for (const auto& fr : report.families) {
        ordered_json fj;
        fj["family"] = family_id(fr.family);
        fj["display_name"] = family_display_name(fr.family);
        fj["device_count"] = fr.device_count;

        ordered_json ct;
        ct["top_k"] = fr.countries.top_k;
        auto row_json = [](const CountryRow& r) {
            ordered_json rj;
            rj["country_code"] = r.country_code;
            rj["country_name"] = r.country_name;
            rj["dev_abs"] = r.dev_abs;
            rj["dev_rel"] = round_half_up(r.dev_rel, 2);
            rj["cve_abs"] = r.cve_abs;
            rj["cve_rel"] = round_half_up(r.cve_rel, 2);
            rj["weighted_abs"] = round_half_up(r.weighted_abs, 1);
            rj["weighted_rel"] = round_half_up(r.weighted_rel, 2);
            return rj;
        };
        ct["rows"] = ordered_json::array();
        for (const auto& r : fr.countries.rows) ct["rows"].push_back(row_json(r));
        ct["top_k_sums"] = row_json(fr.countries.top_k_sums);
        ct["total_sums"] = row_json(fr.countries.total_sums);
        fj["countries"] = std::move(ct);

        fj["prevalence"] = ordered_json::array();
        for (const auto& r : fr.prevalence) {
            ordered_json rj;
            rj["key"] = r.key;
            rj["occ_abs"] = r.occ_abs;
            rj["occ_rel"] = round_half_up(r.occ_rel, 2);
            rj["stride"] = r.stride;
            fj["prevalence"].push_back(std::move(rj));
        }

        ordered_json st;
        st["mean"] = round_half_up(fr.stats.mean_findings_per_device, 2);
        st["median"] = static_cast<std::int64_t>(fr.stats.median_findings_per_device);
        st["min"] = static_cast<std::int64_t>(fr.stats.min_findings);
        st["max"] = static_cast<std::int64_t>(fr.stats.max_findings);
        st["variance"] = round_half_up(fr.stats.variance, 2);
        fj["device_stats"] = std::move(st);

        fj["port_frequency"] = ordered_json::array();
        for (const auto& r : fr.ports) {
            ordered_json rj;
            rj["transport"] = to_string(r.transport);
            rj["port"] = r.port;
            rj["host_abs"] = r.host_abs;
            rj["host_rel"] = round_half_up(r.host_rel, 2);
            fj["port_frequency"].push_back(std::move(rj));
        }
        doc["families"].push_back(std::move(fj));
    }

    doc["comparison"] = ordered_json::array();
    for (const auto& r : report.comparison) {
        ordered_json rj;
        rj["family"] = family_id(r.family);
        rj["display_name"] = family_display_name(r.family);
        rj["dev_abs"] = r.dev_abs;
        rj["dev_rel"] = round_half_up(r.dev_rel, 2);
        ordered_json cp;
        for (std::size_t i = 0; i < kStrideOrder.size(); ++i)
            cp[std::string(1, kStrideOrder[i])] = round_half_up(r.class_prevalence[i], 2);
        rj["class_prevalence"] = std::move(cp);
        rj["cve_abs"] = r.cve_abs;
        rj["cve_rel"] = round_half_up(r.cve_rel, 2);
        rj["weighted_abs"] = round_half_up(r.weighted_abs, 1);
        rj["weighted_rel"] = round_half_up(r.weighted_rel, 2);
        rj["mean_cvss"] = round_half_up(r.mean_cvss, 2);
        doc["comparison"].push_back(std::move(rj));
    }
    return doc;
}

inline std::string render_report(const Report& report, OutputFormat format) {
    if (format == OutputFormat::json) return report_to_json(report).dump(2) + "\n";

    std::ostringstream out;
    bool first = true;
    auto emit = [&](const TextTable& t) {
        if (!first) out << '\n';
        first = false;
        if (format == OutputFormat::csv) out << "# " << t.id << '\n';
        out << emit_table(t, format);
    };
    for (const auto& fr : report.families) {
        emit(country_text_table(fr.countries, fr.family, format));
        emit(prevalence_text_table(fr.prevalence, fr.family, format));
        emit(stats_text_table(fr.stats, fr.family, format));
        emit(ports_text_table(fr.ports, fr.family, format));
    }
    emit(comparison_text_table(report.comparison, format));
    return out.str();
}

}  // namespace audit
