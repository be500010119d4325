#pragma once

// Programmatic entry point behind the `audit` binary. Kept header-side so the
// test suite can drive full runs in-process and capture both streams.
//
// Exit codes: 0 success, 1 input problems (missing/malformed/empty input,
// network or auth failures, usage errors), 2 rule or fingerprint validation
// failures. Diagnostics go to the error stream only; the report stream is
// byte-deterministic for a given input and configuration.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "audit/api_client.hpp"
#include "audit/corpus.hpp"
#include "audit/fingerprint.hpp"
#include "audit/ingest.hpp"
#include "audit/model.hpp"
#include "audit/report.hpp"
#include "audit/rules.hpp"

namespace audit {

inline std::string bundled_data_dir() {
#ifdef AUDIT_BUNDLED_DATA_DIR
    return AUDIT_BUNDLED_DATA_DIR;
#else
    return "data";
#endif
}

struct RunConfig {
    std::optional<std::string> export_path;
    std::optional<std::string> corpus_path;
    std::optional<std::string> query;  // live search, requires live=true
    bool live = false;

    std::string rules_dir = bundled_data_dir() + "/rules";
    std::string fingerprints_path = bundled_data_dir() + "/fingerprints.json";
    std::string format = "md";
    std::optional<std::string> out_path;
    std::size_t top_k = 10;
    std::optional<std::string> family;  // restrict report to one family id

    // live-path knobs (the test server overrides base_url)
    std::string base_url = "https://api.shodan.io";
    std::size_t page_limit = 10;
};

inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    int sources = (cfg.export_path ? 1 : 0) + (cfg.corpus_path ? 1 : 0) + (cfg.query ? 1 : 0);
    if (sources != 1) {
        err << "audit: exactly one input source required (--export, --corpus, or --query with "
               "--live)\n";
        return 1;
    }
    if (cfg.query && !cfg.live) {
        err << "audit: --query requires --live\n";
        return 1;
    }

    OutputFormat format;
    try {
        format = output_format_from_string(cfg.format);
    } catch (const ValidationError& e) {
        err << "audit: " << e.what() << '\n';
        return 1;
    }

    FingerprintSet fingerprints;
    std::map<DeviceFamily, RuleSet> rulesets;
    try {
        fingerprints = load_fingerprints(cfg.fingerprints_path);
        rulesets = load_rulesets(cfg.rules_dir);
    } catch (const std::exception& e) {
        err << "audit: rule/fingerprint data rejected: " << e.what() << '\n';
        return 2;
    }

    std::optional<DeviceFamily> only_family;
    if (cfg.family) {
        DeviceFamily f = family_from_id(*cfg.family);
        if (f == DeviceFamily::unknown) {
            err << "audit: unknown family \"" << *cfg.family << "\"\n";
            return 1;
        }
        only_family = f;
    }

    std::vector<HostRecord> hosts;
    try {
        if (cfg.export_path) {
            LoadResult loaded = load_export_file(*cfg.export_path);
            err << "audit: " << loaded.lines_seen << " lines, " << loaded.hosts.size()
                << " unique hosts, " << loaded.malformed_lines << " malformed lines skipped\n";
            hosts = std::move(loaded.hosts);
        } else if (cfg.corpus_path) {
            CorpusSpec spec = load_corpus_spec(*cfg.corpus_path);
            hosts = generate_corpus(spec, fingerprints, rulesets);
            err << "audit: generated " << hosts.size() << " synthetic hosts\n";
        } else {
            const char* key = std::getenv("AUDITOR_API_KEY");
            if (!key || !*key) {
                err << "audit: AUDITOR_API_KEY is not set\n";
                return 1;
            }
            FetchOptions opts;
            opts.base_url = cfg.base_url;
            opts.page_limit = cfg.page_limit;
            hosts = fetch_search(*cfg.query, ApiCredentials{key}, opts);
            err << "audit: live search returned " << hosts.size() << " unique hosts\n";
        }
    } catch (const std::exception& e) {
        err << "audit: input failed: " << e.what() << '\n';
        return 1;
    }

    AssessedCorpus corpus = assess_hosts(hosts, fingerprints, rulesets);
    if (corpus.ambiguous_hosts)
        err << "audit: warning: " << corpus.ambiguous_hosts
            << " hosts matched more than one family fingerprint; first match kept\n";
    if (corpus.unknown_hosts)
        err << "audit: " << corpus.unknown_hosts << " hosts matched no family fingerprint\n";

    if (only_family) {
        std::erase_if(corpus.assessments,
                      [&](const DeviceAssessment& a) { return a.family != *only_family; });
        std::erase_if(corpus.hosts_by_family,
                      [&](const auto& kv) { return kv.first != *only_family; });
    }

    Report report = build_report(corpus, rulesets, cfg.top_k);
    std::string rendered = render_report(report, format);

    if (cfg.out_path) {
        std::ofstream f(*cfg.out_path, std::ios::binary);
        if (!f) {
            err << "audit: cannot write " << *cfg.out_path << '\n';
            return 1;
        }
        f << rendered;
    } else {
        out << rendered;
    }
    return 0;
}

}  // namespace audit
