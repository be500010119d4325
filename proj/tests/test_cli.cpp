#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "audit/cli.hpp"

using namespace audit;

namespace {

const std::filesystem::path kDataDir = AUDIT_BUNDLED_DATA_DIR;

struct RunResult {
    int code = 0;
    std::string out;
    std::string err;
};

RunResult drive(const RunConfig& cfg) {
    std::ostringstream out, err;
    RunResult r;
    r.code = run(cfg, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

RunConfig corpus_config(const std::string& format) {
    RunConfig cfg;
    cfg.corpus_path = (kDataDir / "fixtures/mitsubishi_table.corpus.json").string();
    cfg.format = format;
    return cfg;
}

std::filesystem::path scratch_dir() {
    auto dir = std::filesystem::temp_directory_path() / "audit_cli_test";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("corpus runs render deterministically in all formats", "[cli]") {
    for (const char* format : {"md", "json", "csv"}) {
        RunResult first = drive(corpus_config(format));
        RunResult second = drive(corpus_config(format));
        INFO(format);
        REQUIRE(first.code == 0);
        CHECK(first.out == second.out);
        CHECK_FALSE(first.out.empty());
        CHECK(first.err.find("generated 188 synthetic hosts") != std::string::npos);
    }

    RunResult md = drive(corpus_config("md"));
    CHECK(md.out.find("## Vulnerability prevalence: Mitsubishi MELSEC-Q") != std::string::npos);

    RunResult csv = drive(corpus_config("csv"));
    CHECK(csv.out.rfind("# country_distribution", 0) == 0);

    RunResult json = drive(corpus_config("json"));
    auto doc = ordered_json::parse(json.out);
    REQUIRE(doc.contains("families"));
    CHECK(doc["families"][0]["device_count"] == 188);
    CHECK(doc["comparison"].size() == 1);
}

TEST_CASE("exactly one input source is required", "[cli]") {
    RunConfig none;
    CHECK(drive(none).code == 1);

    RunConfig both = corpus_config("md");
    both.export_path = (kDataDir / "fixtures/golden_hosts.ndjson").string();
    CHECK(drive(both).code == 1);

    RunConfig query_only;
    query_only.query = "port:502";
    RunResult r = drive(query_only);
    CHECK(r.code == 1);
    CHECK(r.err.find("--live") != std::string::npos);
}

TEST_CASE("bad usage surfaces as exit 1 with a diagnostic", "[cli]") {
    SECTION("unknown output format") {
        RunConfig cfg = corpus_config("yaml");
        RunResult r = drive(cfg);
        CHECK(r.code == 1);
        CHECK(r.out.empty());
    }
    SECTION("missing export file") {
        RunConfig cfg;
        cfg.export_path = "/nonexistent/export.ndjson";
        RunResult r = drive(cfg);
        CHECK(r.code == 1);
        CHECK(r.err.find("input failed") != std::string::npos);
    }
    SECTION("export with no usable records") {
        auto p = scratch_dir() / "junk.ndjson";
        std::ofstream(p) << "not json\nstill not json\n";
        RunConfig cfg;
        cfg.export_path = p.string();
        CHECK(drive(cfg).code == 1);
    }
    SECTION("unknown family filter") {
        RunConfig cfg = corpus_config("md");
        cfg.family = "acme_plc";
        CHECK(drive(cfg).code == 1);
    }
    SECTION("unwritable output path") {
        RunConfig cfg = corpus_config("md");
        cfg.out_path = "/nonexistent/dir/report.md";
        CHECK(drive(cfg).code == 1);
    }
}

TEST_CASE("broken rule or fingerprint data is exit 2", "[cli]") {
    auto dir = scratch_dir() / "broken_rules";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "x.rules.json") << R"({"family": "omron_cj_cs", "rules": []})";

    RunConfig cfg = corpus_config("md");
    cfg.rules_dir = dir.string();
    RunResult r = drive(cfg);
    CHECK(r.code == 2);
    CHECK(r.err.find("rejected") != std::string::npos);

    RunConfig missing = corpus_config("md");
    missing.fingerprints_path = "/nonexistent/fingerprints.json";
    CHECK(drive(missing).code == 2);
}

TEST_CASE("family filter drops other families from the report", "[cli]") {
    RunConfig cfg = corpus_config("json");
    cfg.family = "schneider_bmx_p34";  // corpus only contains melsec devices
    RunResult r = drive(cfg);
    REQUIRE(r.code == 0);
    auto doc = ordered_json::parse(r.out);
    CHECK(doc["families"].empty());
    CHECK(doc["comparison"].empty());

    cfg.family = "mitsubishi_melsec_q";
    RunResult keep = drive(cfg);
    REQUIRE(keep.code == 0);
    auto kept = ordered_json::parse(keep.out);
    CHECK(kept["families"].size() == 1);
}

TEST_CASE("--out writes exactly the stream bytes", "[cli]") {
    RunResult streamed = drive(corpus_config("csv"));
    REQUIRE(streamed.code == 0);

    auto p = scratch_dir() / "report.csv";
    RunConfig cfg = corpus_config("csv");
    cfg.out_path = p.string();
    RunResult filed = drive(cfg);
    REQUIRE(filed.code == 0);
    CHECK(filed.out.empty());
    CHECK(slurp(p) == streamed.out);
}

TEST_CASE("export ingest feeds the same pipeline", "[cli]") {
    RunConfig cfg;
    cfg.export_path = (kDataDir / "fixtures/melsec_export_259.ndjson").string();
    cfg.format = "json";
    RunResult r = drive(cfg);
    REQUIRE(r.code == 0);
    CHECK(r.err.find("259 lines, 187 unique hosts, 0 malformed") != std::string::npos);
    auto doc = ordered_json::parse(r.out);
    CHECK(doc["families"][0]["family"] == "mitsubishi_melsec_q");
    CHECK(doc["families"][0]["device_count"] == 187);
}

TEST_CASE("live mode needs an api key in the environment", "[cli]") {
    unsetenv("AUDITOR_API_KEY");
    RunConfig cfg;
    cfg.query = "port:5007";
    cfg.live = true;
    RunResult r = drive(cfg);
    CHECK(r.code == 1);
    CHECK(r.err.find("AUDITOR_API_KEY") != std::string::npos);
}

TEST_CASE("live mode pulls hosts from the search endpoint", "[cli]") {
    httplib::Server server;
    server.Get("/shodan/host/search", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            R"({"total": 1, "matches": [{"ip_str": "203.0.113.77", "port": 5007,
                "transport": "tcp",
                "data": "Mitsubishi Electric MELSEC-Q Series\nCPU: Q03UDECPU",
                "location": {"country_code": "JP", "country_name": "Japan"},
                "timestamp": "2020-04-14T08:00:00"}]})",
            "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("AUDITOR_API_KEY", "test-key", 1);
    RunConfig cfg;
    cfg.query = "product:\"MELSEC-Q\"";
    cfg.live = true;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.page_limit = 1;
    cfg.format = "json";
    RunResult r = drive(cfg);
    server.stop();
    listener.join();
    unsetenv("AUDITOR_API_KEY");

    REQUIRE(r.code == 0);
    CHECK(r.err.find("1 unique hosts") != std::string::npos);
    auto doc = ordered_json::parse(r.out);
    REQUIRE(doc["families"].size() == 1);
    CHECK(doc["families"][0]["family"] == "mitsubishi_melsec_q");
    CHECK(doc["families"][0]["device_count"] == 1);
}
