#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "cfcd/data.hpp"
#include "cfcd/trainer.hpp"

using namespace cfcd;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CFCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

struct Workspace {
    fs::path dir;
    Workspace() : dir(fs::temp_directory_path() / "cfcd_cli_test") {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

void write_small_spec(const std::string& path) {
    SyntheticSpec spec;
    spec.n_classes = 4;
    spec.samples_per_class = 8;
    spec.d_in = 6;
    spec.grid_w = 4;
    spec.grid_h = 4;
    spec.queries_per_class = 2;
    spec.seed = 9;
    save_spec(spec, path);
}

void write_small_config(const std::string& path) {
    TrainConfig config;
    config.total_epochs = 3;
    config.phase1_epochs = 2;
    config.batch_size = 8;
    config.q = 2;
    config.tau = 50.0;
    config.d_c = 8;
    config.d_g = 8;
    config.seed = 1;
    save_config(config, path);
}

}  // namespace

TEST_CASE("gen is deterministic and writes the full corpus") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    CHECK(run("gen --spec " + ws.path("spec.json") + " --out " + ws.path("a")) == 0);
    CHECK(run("gen --spec " + ws.path("spec.json") + " --out " + ws.path("b")) == 0);
    CHECK(fs::exists(ws.path("a") + "/dataset.jsonl"));
    CHECK(fs::exists(ws.path("a") + "/benchmark_medium.json"));
    CHECK(fs::exists(ws.path("a") + "/benchmark_hard.json"));
    CHECK(slurp(ws.path("a") + "/dataset.jsonl") == slurp(ws.path("b") + "/dataset.jsonl"));
    CHECK(line_count(ws.path("a") + "/dataset.jsonl") == 4 * 8);
}

TEST_CASE("missing input files exit with status 2") {
    Workspace ws;
    CHECK(run("gen --spec " + ws.path("nope.json") + " --out " + ws.path("x")) == 2);
    CHECK(run("bogus-subcommand") == 2);
    CHECK(run("eval --checkpoint a --dataset b --benchmark c") == 2);
}

TEST_CASE("train, eval, and diagnose round trip") {
    Workspace ws;
    write_small_spec(ws.path("spec.json"));
    write_small_config(ws.path("train.cfg"));
    REQUIRE(run("gen --spec " + ws.path("spec.json") + " --out " + ws.path("data")) == 0);

    const std::string dataset = ws.path("data") + "/dataset.jsonl";
    const std::string medium = ws.path("data") + "/benchmark_medium.json";
    REQUIRE(run("train --config " + ws.path("train.cfg") + " --dataset " + dataset +
                " --benchmark " + medium + " --out " + ws.path("run")) == 0);
    CHECK(fs::exists(ws.path("run") + "/final.ckpt"));
    CHECK(fs::exists(ws.path("run") + "/checkpoint_001.ckpt"));
    CHECK(fs::exists(ws.path("run") + "/checkpoint_003.ckpt"));
    {
        std::ifstream log(ws.path("run") + "/train_log.csv");
        std::string header;
        std::getline(log, header);
        CHECK(header == "epoch,step,loss_mda,loss_trip,total,s,m,cos_m,lr");
        CHECK(line_count(ws.path("run") + "/train_log.csv") > 1);
    }

    REQUIRE(run("eval --checkpoint " + ws.path("run") + "/final.ckpt --dataset " + dataset +
                " --benchmark " + medium + " --scales 3 --out " + ws.path("eval.csv")) == 0);
    const std::string eval_csv = slurp(ws.path("eval.csv"));
    CHECK(eval_csv.rfind("# split=medium scales=3 n_scales=3", 0) == 0);
    CHECK(eval_csv.find("mAP,") != std::string::npos);

    REQUIRE(run("diagnose --checkpoint " + ws.path("run") + "/final.ckpt --dataset " + dataset +
                " --trainlog " + ws.path("run") + "/train_log.csv --margin 0.1 --out " +
                ws.path("diag")) == 0);
    for (const char* name : {"hist_target.csv", "hist_gap.csv", "hist_gap_margin.csv",
                             "summary.csv", "gap_hist.svg", "scale_margin.svg"})
        CHECK(fs::exists(ws.path("diag") + "/" + name));
    const std::string svg = slurp(ws.path("diag") + "/gap_hist.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(line_count(ws.path("diag") + "/hist_gap.csv") == 201);  // header + 200 bins

    // Ablation flags and seed overrides are accepted.
    REQUIRE(run("train --config " + ws.path("train.cfg") + " --dataset " + dataset +
                " --ablation no_hns --ablation no_matching --seed 5 --out " +
                ws.path("run2")) == 0);
    CHECK(fs::exists(ws.path("run2") + "/final.ckpt"));
    CHECK(run("train --config " + ws.path("train.cfg") + " --dataset " + dataset +
              " --ablation bogus --out " + ws.path("run3")) == 2);
}
