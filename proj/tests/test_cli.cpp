#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// End-to-end exercises of the CLI binary: exit codes, determinism of emitted
// artifacts, and the PGM contract. T2NET_CLI_PATH is injected by CMake.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "t2net/serialize.hpp"

using namespace t2net;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("t2net_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(T2NET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string run_cli_capture(const std::string& args, int* exit_code = nullptr) {
    TempDir tmp;
    const std::string out = tmp.file("stdout.txt");
    const std::string cmd = std::string(T2NET_CLI_PATH) + " " + args + " > " + out + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (exit_code) *exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream is(out);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_small_config(const std::string& path, int steps = 8) {
    std::ofstream os(path);
    os << "n_stages: 1\nchannels: 6\nscale: 2\nsteps: " << steps
       << "\nlr: 1e-3\nbatch: 2\nseed: 9\n";
}

}  // namespace

TEST_CASE("cli: unknown flags and missing arguments exit with code 2") {
    CHECK(run_cli("gen-data --out /tmp/x --no-such-flag") == 2);
    CHECK(run_cli("train") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("") == 2);
}

TEST_CASE("cli: bad geometry exits with code 2") {
    TempDir dir;
    CHECK(run_cli("gen-data --out " + dir.file("d") + " --size 48") == 2);
    CHECK(run_cli("gen-data --out " + dir.file("d") + " --size 64 --scale 3") == 2);
}

TEST_CASE("cli: gen-data with zero slices writes an empty manifest and exits 0") {
    TempDir dir;
    const auto out = dir.file("empty");
    CHECK(run_cli("gen-data --out " + out + " --slices 0") == 0);
    CHECK(read_manifest(out + "/manifest.txt").empty());
}

TEST_CASE("cli: gen-data is byte-deterministic across runs") {
    TempDir dir;
    const std::string flags = " --slices 3 --size 32 --scale 2 --accel 6 --center-frac 0.0625 --seed 5";
    const auto a = dir.file("a"), b = dir.file("b");
    REQUIRE(run_cli("gen-data --out " + a + flags) == 0);
    REQUIRE(run_cli("gen-data --out " + b + flags) == 0);
    CHECK(slurp(a + "/manifest.txt") == slurp(b + "/manifest.txt"));
    for (const auto& e : read_manifest(a + "/manifest.txt")) {
        CHECK(slurp(a + "/" + e.file) == slurp(b + "/" + e.file));
        CHECK(slurp(a + "/" + e.file + ".meta") == slurp(b + "/" + e.file + ".meta"));
    }
}

TEST_CASE("cli: identity pipeline passes --verify") {
    TempDir dir;
    const auto out = dir.file("ident");
    CHECK(run_cli("gen-data --out " + out +
                  " --slices 2 --size 32 --scale 1 --accel 1 --center-frac 0.125 --verify") == 0);
}

TEST_CASE("cli: train -> eval round trip is bit-stable") {
    TempDir dir;
    const auto data = dir.file("data");
    REQUIRE(run_cli("gen-data --out " + data + " --slices 3 --size 32 --seed 2") == 0);
    const auto cfg = dir.file("cfg.txt");
    write_small_config(cfg);

    const auto ckpt = dir.file("model.t2n");
    REQUIRE(run_cli("train --data " + data + " --config " + cfg + " --out " + ckpt) == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(ckpt + ".cfg"));
    CHECK(fs::exists(ckpt + ".log.csv"));

    int rc1 = 0, rc2 = 0;
    const auto table1 = run_cli_capture("eval --data " + data + " --ckpt " + ckpt, &rc1);
    const auto table2 = run_cli_capture("eval --data " + data + " --ckpt " + ckpt, &rc2);
    CHECK(rc1 == 0);
    CHECK(rc2 == 0);
    CHECK(table1 == table2);
    CHECK(table1.find("sr_psnr") != std::string::npos);

    // training again with the same config reproduces the checkpoint bytes
    const auto ckpt2 = dir.file("model2.t2n");
    REQUIRE(run_cli("train --data " + data + " --config " + cfg + " --out " + ckpt2) == 0);
    CHECK(slurp(ckpt) == slurp(ckpt2));
    CHECK(slurp(ckpt + ".log.csv") == slurp(ckpt2 + ".log.csv"));
}

TEST_CASE("cli: non-finite loss during training exits with code 4") {
    TempDir dir;
    const auto data = dir.file("data");
    REQUIRE(run_cli("gen-data --out " + data + " --slices 2 --size 32 --seed 8") == 0);
    const auto cfg = dir.file("cfg.txt");
    {
        std::ofstream os(cfg);
        os << "n_stages: 1\nchannels: 6\nscale: 2\nsteps: 10\nlr: 1e12\nbatch: 2\nseed: 9\n"
           << "zero_init_outputs: false\n";
    }
    CHECK(run_cli("train --data " + data + " --config " + cfg + " --out " + dir.file("m.t2n")) == 4);
}

TEST_CASE("cli: corrupt checkpoint magic exits with code 3") {
    TempDir dir;
    const auto data = dir.file("data");
    REQUIRE(run_cli("gen-data --out " + data + " --slices 2 --size 32 --seed 3") == 0);
    const auto cfg = dir.file("cfg.txt");
    write_small_config(cfg, 2);
    const auto ckpt = dir.file("model.t2n");
    REQUIRE(run_cli("train --data " + data + " --config " + cfg + " --out " + ckpt) == 0);

    auto bytes = slurp(ckpt);
    bytes[0] = 'Z';
    {
        std::ofstream os(ckpt, std::ios::binary);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK(run_cli("eval --data " + data + " --ckpt " + ckpt) == 3);
    CHECK(run_cli("eval --data " + data + " --ckpt " + dir.file("missing.t2n")) == 3);
}

TEST_CASE("cli: ablate prints three rows with six metric columns") {
    TempDir dir;
    const auto data = dir.file("data");
    REQUIRE(run_cli("gen-data --out " + data + " --slices 2 --size 32 --seed 4") == 0);
    const auto cfg = dir.file("cfg.txt");
    write_small_config(cfg, 4);

    int rc = 0;
    const auto out = run_cli_capture("ablate --data " + data + " --config " + cfg, &rc);
    REQUIRE(rc == 0);
    // rows in ablation-table order, full model last
    const auto pos_norec = out.find("w/o Rec");
    const auto pos_nott = out.find("w/o Htt");
    const auto pos_full = out.find("T2Net ");
    REQUIRE(pos_norec != std::string::npos);
    REQUIRE(pos_nott != std::string::npos);
    REQUIRE(pos_full != std::string::npos);
    CHECK(pos_norec < pos_nott);
    CHECK(pos_nott < pos_full);

    // each table row carries exactly 6 value columns after the label
    std::istringstream ss(out.substr(pos_norec));
    std::string line;
    std::getline(ss, line);
    std::istringstream row(line.substr(std::string("w/o Rec").size()));
    int cols = 0;
    std::string tok;
    while (row >> tok) ++cols;
    CHECK(cols == 6);
}

TEST_CASE("cli: error-map emits the five PGMs; untrained model's err equals target") {
    TempDir dir;
    const auto data = dir.file("data");
    REQUIRE(run_cli("gen-data --out " + data + " --slices 1 --size 32 --seed 6") == 0);
    const auto cfg = dir.file("cfg.txt");
    write_small_config(cfg, 0);  // zero steps: parameters stay zero-initialized
    const auto ckpt = dir.file("model.t2n");
    REQUIRE(run_cli("train --data " + data + " --config " + cfg + " --out " + ckpt) == 0);

    const auto prefix = dir.file("map");
    REQUIRE(run_cli("error-map --ckpt " + ckpt + " --sample " + data + "/slice_0000.t2n --out " +
                    prefix) == 0);
    for (const char* suffix : {"_input", "_sr", "_rec", "_target", "_err"})
        CHECK(fs::exists(prefix + suffix + ".pgm"));

    // PGM header golden bytes: 32x32 SR output (16x16 LR input at scale 2)
    auto sr_bytes = slurp(prefix + "_sr.pgm");
    const std::string header = "P5\n32 32\n255\n";
    REQUIRE(sr_bytes.size() == header.size() + 32 * 32);
    CHECK(std::equal(header.begin(), header.end(), sr_bytes.begin()));
    for (std::size_t i = header.size(); i < sr_bytes.size(); ++i) CHECK(sr_bytes[i] == 0);

    // zero output: |0 - target| = target, and max(target) = 1 after
    // normalization, so the err map reproduces the target bytes
    CHECK(slurp(prefix + "_err.pgm") == slurp(prefix + "_target.pgm"));

    // byte-idempotent across runs
    const auto prefix2 = dir.file("map2");
    REQUIRE(run_cli("error-map --ckpt " + ckpt + " --sample " + data + "/slice_0000.t2n --out " +
                    prefix2) == 0);
    CHECK(slurp(prefix + "_err.pgm") == slurp(prefix2 + "_err.pgm"));
}
