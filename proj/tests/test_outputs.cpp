#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "ebsde/outputs.hpp"
#include "json.hpp"

using namespace ebsde;
namespace fs = std::filesystem;

namespace {

fs::path temp_root() {
    fs::path p = fs::temp_directory_path() / "ebsde_outputs_test";
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

TEST_CASE("fnv1a64 matches the reference vectors") {
    CHECK(fnv1a64_bytes("", 0) == 0xcbf29ce484222325ull);
    CHECK(fnv1a64_bytes("a", 1) == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64_bytes("foobar", 6) == 0x85944171f73967e8ull);

    fs::path p = temp_root() / "hash_probe.bin";
    const char bytes[] = {'\0', 'a', '\n', '\0'};
    {
        std::ofstream out(p, std::ios::binary);
        out.write(bytes, sizeof(bytes));
    }
    CHECK(fnv1a64_file(p.string()) == fnv1a64_bytes(bytes, sizeof(bytes)));

    fs::path q = temp_root() / "hash_foobar.bin";
    write_text_file(q.string(), "foobar");
    CHECK(fnv1a64_file(q.string()) == 0x85944171f73967e8ull);

    CHECK_THROWS_AS(fnv1a64_file((temp_root() / "no_such_file").string()), std::runtime_error);
}

TEST_CASE("doubles format with fixed precision") {
    CHECK(format_double(1.5) == "1.5");
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(-2.5) == "-2.5");
    CHECK(format_double(0.001) == "0.001");
    CHECK(format_double(1.0 / 3.0) == "0.333333333333");
    CHECK(format_double(1e20) == "1e+20");
    CHECK(format_double(1234567890123456.0) == "1.23456789012e+15");
}

TEST_CASE("csv and series writers produce exact bytes") {
    fs::path dir = temp_root();

    CsvTable table;
    table.header = {"alpha", "v"};
    table.rows = {{"0.4", "2"}, {"0.2", "4.5"}};
    fs::path csv = dir / "t.csv";
    write_csv(csv.string(), table);
    CHECK(read_file(csv) == "alpha,v\n0.4,2\n0.2,4.5\n");

    table.rows.push_back({"0.1"});
    CHECK_THROWS_AS(write_csv(csv.string(), table), std::runtime_error);

    fs::path dat = dir / "t.dat";
    write_series(dat.string(), {{0.5, 1.0}, {1.0, 0.25}});
    CHECK(read_file(dat) == "0.5 1\n1 0.25\n");

    fs::path txt = dir / "t.txt";
    write_text_file(txt.string(), "line one\nline two\n");
    CHECK(read_file(txt) == "line one\nline two\n");

    CHECK_THROWS_AS(write_csv("/nonexistent_dir_ebsde/x.csv", CsvTable{}), std::runtime_error);
    CHECK_THROWS_AS(write_series("/nonexistent_dir_ebsde/x.dat", {}), std::runtime_error);
    CHECK_THROWS_AS(write_text_file("/nonexistent_dir_ebsde/x.txt", ""), std::runtime_error);
}

TEST_CASE("manifest records checksums of emitted files") {
    fs::path dir = temp_root() / "manifest_a";
    fs::remove_all(dir);

    ManifestWriter mw(dir.string(), "demo", 0xdeadbeefull);
    CHECK(fs::is_directory(dir));
    write_text_file((dir / "a.csv").string(), "h\n1\n");
    write_text_file((dir / "b.dat").string(), "0 1\n");
    mw.record_file("a.csv");
    mw.record_file("b.dat");
    mw.record_timing("solve", 1.25);
    mw.record_timing("report", 0.5);
    mw.finalize();

    nlohmann::json m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    CHECK(m.at("artifact_version").get<std::string>() == kArtifactVersion);
    CHECK(m.at("artifact_version").get<std::string>() == "0.1.0");
    CHECK(m.at("schema_version").get<int>() == kOutputSchemaVersion);
    CHECK(m.at("schema_version").get<int>() == 1);
    CHECK(m.at("scenario").get<std::string>() == "demo");
    CHECK(m.at("scenario_hash").get<std::string>() == "00000000deadbeef");
    REQUIRE(m.at("files").size() == 2);
    CHECK(m["files"][0].at("path").get<std::string>() == "a.csv");
    CHECK(m["files"][0].at("fnv1a64").get<std::string>() ==
          hex64(fnv1a64_file((dir / "a.csv").string())));
    CHECK(m["files"][1].at("path").get<std::string>() == "b.dat");
    CHECK(m["files"][1].at("fnv1a64").get<std::string>() ==
          hex64(fnv1a64_file((dir / "b.dat").string())));
    REQUIRE(m.at("timings").size() == 2);
    CHECK(m["timings"][0].at("stage").get<std::string>() == "solve");
    CHECK(m["timings"][0].at("seconds").get<double>() == 1.25);

    // same inputs, second directory: the manifest bytes must not depend on
    // when or where it was produced
    fs::path dir2 = temp_root() / "manifest_b";
    fs::remove_all(dir2);
    ManifestWriter mw2(dir2.string(), "demo", 0xdeadbeefull);
    write_text_file((dir2 / "a.csv").string(), "h\n1\n");
    write_text_file((dir2 / "b.dat").string(), "0 1\n");
    mw2.record_file("a.csv");
    mw2.record_file("b.dat");
    mw2.record_timing("solve", 1.25);
    mw2.record_timing("report", 0.5);
    mw2.finalize();
    CHECK(fnv1a64_file((dir / "manifest.json").string()) ==
          fnv1a64_file((dir2 / "manifest.json").string()));

    ManifestWriter broken((temp_root() / "manifest_c").string(), "demo", 1);
    broken.record_file("missing.csv");
    CHECK_THROWS_AS(broken.finalize(), std::runtime_error);
}
