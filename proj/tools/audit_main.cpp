// Command-line front end: exposure and vulnerability report over an offline
// scan export, a generated synthetic corpus, or a live search query.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "audit/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Passive exposure assessment for internet-facing industrial controllers"};
    app.get_formatter()->column_width(34);

    std::string export_path, corpus_path, query, family, out_path;
    audit::RunConfig cfg;

    auto* opt_export = app.add_option("--export", export_path, "NDJSON scan export (plain or gzip)");
    auto* opt_corpus = app.add_option("--corpus", corpus_path, "synthetic corpus spec (JSON)");
    auto* opt_query = app.add_option("--query", query, "live search query (needs --live)");
    app.add_flag("--live", cfg.live, "allow the live search path");
    app.add_option("--rules", cfg.rules_dir, "directory with *.rules.json files");
    app.add_option("--fingerprints", cfg.fingerprints_path, "fingerprint definition file");
    app.add_option("--format", cfg.format, "output format: csv, json or md")
        ->check(CLI::IsMember({"csv", "json", "md"}));
    auto* opt_out = app.add_option("--out", out_path, "write the report to a file instead of stdout");
    app.add_option("--top-k", cfg.top_k, "rows in the per-country table (default 10)");
    auto* opt_family = app.add_option("--family", family, "restrict the report to one family id");
    app.add_option("--base-url", cfg.base_url, "search API base URL");
    app.add_option("--page-limit", cfg.page_limit, "maximum live search pages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // usage problems are input errors
    }

    if (*opt_export) cfg.export_path = export_path;
    if (*opt_corpus) cfg.corpus_path = corpus_path;
    if (*opt_query) cfg.query = query;
    if (*opt_out) cfg.out_path = out_path;
    if (*opt_family) cfg.family = family;

    return audit::run(cfg, std::cout, std::cerr);
}
