#include <gtest/gtest.h>

#include <cstdio>
#include <regex>
#include <sstream>

#include "geoeval/cli.hpp"
#include "support.hpp"

using namespace geoeval;
using nlohmann::json;
using testsupport::fixture;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "geoeval");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), cli::Streams{out, err});
    return {code, out.str(), err.str()};
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

/// Runs the built tool as a subprocess and returns its exit status and stdout.
std::pair<int, std::string> run_tool(const std::string& args) {
    std::string cmd = std::string(GEOEVAL_TOOL) + " " + args + " 2>/dev/null";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

const std::regex kIdPattern("^[A-Z0-9]{16}$");

}  // namespace

TEST(Cli, ValidateParisCorpus) {
    auto r = run_cli({"validate", fixture("paris_corpus.xml")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(r.out);
    EXPECT_EQ(j["valid"], true);
    EXPECT_EQ(j["entries"], 1);
    EXPECT_EQ(j["toponyms"], 1);
    EXPECT_EQ(j["fully_annotated"], true);
}

TEST(Cli, ValidateRejectsBadInput) {
    testsupport::TempDir dir;
    write_file(dir.file("bad.xml"), "<entries><entry>");
    auto r = run_cli({"validate", dir.file("bad.xml")});
    EXPECT_EQ(r.code, cli::kExitValidation);
    EXPECT_FALSE(r.err.empty());
    EXPECT_EQ(run_cli({"validate", dir.file("missing.xml")}).code, cli::kExitValidation);
}

TEST(Cli, ValidatePartialFlag) {
    auto r = run_cli({"validate", "--partial", fixture("paris_corpus.xml")});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(json::parse(r.out)["fully_annotated"], false);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"validate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"run", "--corpus", fixture("paris_corpus.xml")}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, ConvertTsvAndCsv) {
    testsupport::TempDir dir;
    auto tsv = run_cli({"convert", "--format", "tsv_multi_line", "--map", fixture("sample.tsv.map.json"), fixture("sample.tsv"),
                        dir.file("tsv.xml")});
    ASSERT_EQ(tsv.code, 0) << tsv.err;
    auto corpus = parse_unified_corpus(read_file(dir.file("tsv.xml")));
    ASSERT_EQ(corpus.entries.size(), 3u);
    EXPECT_EQ(corpus.entries[0].annotations.size(), 2u);
    EXPECT_EQ(corpus.entries[0].annotations[1].phrase, "Texas");
    EXPECT_EQ(corpus.entries[1].annotations[0].phrase, "New York City");
    EXPECT_TRUE(corpus.entries[2].annotations.empty());

    auto csv = run_cli({"convert", "--format", "csv_one_per_line", "--map", fixture("sample.csv.map.json"), fixture("sample.csv"),
                        dir.file("csv.xml")});
    ASSERT_EQ(csv.code, 0) << csv.err;
    EXPECT_EQ(json::parse(csv.out)["entries"], 2);
    auto c = parse_unified_corpus(read_file(dir.file("csv.xml")));
    EXPECT_EQ(c.entries[1].annotations[0].phrase, "Berlin");
    EXPECT_EQ(c.entries[1].annotations[0].start, 13u);

    EXPECT_EQ(run_cli({"convert", "--format", "xlsx", "--map", fixture("sample.csv.map.json"), fixture("sample.csv"), dir.file("x.xml")}).code,
              cli::kExitValidation);
}

TEST(Cli, RunPartialCorpusPrecisionNotApplicable) {
    testsupport::TempDir dir;
    auto r = run_cli({"run", "--corpus", fixture("partial.xml"), "--geoparser", "gazpop", "--gazetteer", fixture("gazetteer.tsv"),
                      "--metrics", "precision", "--out", dir.file("report.json"), "--store", dir.file("store.db")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(std::regex_match(trim(r.out), kIdPattern)) << r.out;
    auto report = json::parse(read_file(dir.file("report.json")));
    EXPECT_EQ(report["status"], "complete");
    EXPECT_EQ(report["results"][0]["metrics"]["precision"], "not_applicable");
    EXPECT_EQ(report["experiment_id"], trim(r.out));
}

TEST(Cli, RunTwiceGivesIdenticalReports) {
    testsupport::TempDir dir;
    auto args = [&](const std::string& out) {
        return std::vector<std::string>{"run", "--corpus", fixture("paris_corpus.xml"), "--corpus", fixture("partial.xml"), "--geoparser", "gazpop",
                                        "--gazetteer", fixture("gazetteer.tsv"), "--metrics", "all", "--out", dir.file(out), "--store",
                                        dir.file("store.db")};
    };
    ASSERT_EQ(run_cli(args("a.json")).code, 0);
    ASSERT_EQ(run_cli(args("b.json")).code, 0);
    auto a = json::parse(read_file(dir.file("a.json"))), b = json::parse(read_file(dir.file("b.json")));
    EXPECT_NE(a["experiment_id"], b["experiment_id"]);
    for (auto* j : {&a, &b}) {
        j->erase("experiment_id");
        j->erase("created_at");
    }
    EXPECT_EQ(a.dump(2), b.dump(2));
    EXPECT_EQ(a["results"].size(), 2u);
}

TEST(Cli, RunWithReplayFixture) {
    testsupport::TempDir dir;
    write_file(dir.file("paris.json"), json{{"1", json::parse(read_file(fixture("paris_output.json")))}}.dump());
    auto r = run_cli({"run", "--corpus", fixture("paris_corpus.xml"), "--geoparser", "replay:" + dir.file("paris.json"), "--metrics",
                      "recall,mdned", "--out", dir.file("report.json"), "--store", dir.file("store.db")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = json::parse(read_file(dir.file("report.json")));
    EXPECT_EQ(report["geoparsers"][0]["id"], "replay-paris");
    EXPECT_EQ(report["results"][0]["metrics"]["recall"], 1.0);
    EXPECT_EQ(report["results"][0]["metrics"]["mdned"], 0.0);
}

TEST(Cli, RunErrors) {
    testsupport::TempDir dir;
    auto base = [&](std::vector<std::string> extra) {
        std::vector<std::string> a{"run", "--corpus", fixture("paris_corpus.xml"), "--out", dir.file("r.json"), "--store", dir.file("s.db")};
        a.insert(a.end(), extra.begin(), extra.end());
        return run_cli(a);
    };
    EXPECT_EQ(base({"--geoparser", "gazpop", "--metrics", "recall"}).code, cli::kExitValidation);
    EXPECT_EQ(base({"--geoparser", "nobody", "--metrics", "recall"}).code, cli::kExitValidation);
    EXPECT_EQ(base({"--geoparser", "gazpop", "--gazetteer", fixture("gazetteer.tsv"), "--metrics", "mrr"}).code, cli::kExitValidation);
    auto down = base({"--geoparser", "http://127.0.0.1:1/parse", "--metrics", "recall"});
    EXPECT_EQ(down.code, cli::kExitTransport);
    auto report = json::parse(read_file(dir.file("r.json")));
    EXPECT_EQ(report["status"], "failed");
}

TEST(Cli, SearchFindsArchivedRecord) {
    testsupport::TempDir dir;
    auto run = run_cli({"run", "--corpus", fixture("paris_corpus.xml"), "--geoparser", "gazpop", "--gazetteer", fixture("gazetteer.tsv"),
                        "--metrics", "all", "--out", dir.file("r.json"), "--store", dir.file("store.db")});
    ASSERT_EQ(run.code, 0);
    auto id = trim(run.out);
    auto found = run_cli({"search", id, "--store", dir.file("store.db")});
    ASSERT_EQ(found.code, 0) << found.err;
    EXPECT_EQ(json::parse(found.out), json::parse(read_file(dir.file("r.json"))));
}

TEST(Cli, SearchMissingAndMalformed) {
    testsupport::TempDir dir;
    auto missing = run_cli({"search", "8380NII17XEKM0GD", "--store", dir.file("empty.db")});
    EXPECT_EQ(missing.code, cli::kExitValidation);
    EXPECT_NE(missing.err.find("8380NII17XEKM0GD"), std::string::npos);
    auto malformed = run_cli({"search", "8380nii17", "--store", dir.file("empty.db")});
    EXPECT_EQ(malformed.code, cli::kExitValidation);
    EXPECT_NE(malformed.err.find("16 characters"), std::string::npos);
}

TEST(Cli, ToolSubprocessArchivesAcrossProcesses) {
    testsupport::TempDir dir;
    auto [code, out] = run_tool("run --corpus " + fixture("paris_corpus.xml") + " --geoparser gazpop --gazetteer " + fixture("gazetteer.tsv") +
                                " --metrics all --out " + dir.file("r.json") + " --store " + dir.file("store.db"));
    ASSERT_EQ(code, 0);
    auto id = trim(out);
    ASSERT_TRUE(std::regex_match(id, kIdPattern)) << out;
    auto [search_code, record] = run_tool("search " + id + " --store " + dir.file("store.db"));
    EXPECT_EQ(search_code, 0);
    EXPECT_EQ(json::parse(record)["experiment_id"], id);
    EXPECT_EQ(run_tool("bogus").first, cli::kExitUsage);
}
