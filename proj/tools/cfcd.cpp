#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cfcd/data.hpp"
#include "cfcd/eval.hpp"
#include "cfcd/model.hpp"
#include "cfcd/plot.hpp"
#include "cfcd/trainer.hpp"

namespace fs = std::filesystem;
using namespace cfcd;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<double> parse_scales(const std::string& arg) {
    if (arg == "1") return {1.0};
    if (arg == "3") return {1.0 / std::sqrt(2.0), 1.0, std::sqrt(2.0)};
    if (arg == "5")
        return {1.0 / (2.0 * std::sqrt(2.0)), 0.5, 1.0 / std::sqrt(2.0), 1.0, std::sqrt(2.0)};
    std::vector<double> scales;
    std::stringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        scales.push_back(std::stod(tok));
    }
    if (scales.empty()) throw ConfigError("no scales parsed from: " + arg);
    return scales;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) {
        std::cerr << "error: file not found: " << path << "\n";
        std::exit(2);
    }
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir) {
    require_file(spec_path);
    const SyntheticSpec spec = load_spec(spec_path);
    const Dataset data = generate(spec);
    fs::create_directories(out_dir);
    save_dataset(data, out_dir + "/dataset.jsonl");
    save_benchmark(data.medium, out_dir + "/benchmark_medium.json");
    save_benchmark(data.hard, out_dir + "/benchmark_hard.json");
    std::cout << "wrote " << data.images.size() << " images, "
              << data.medium.queries.size() << " medium queries, "
              << data.hard.queries.size() << " hard queries to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_path,
              const std::string& out_dir, const std::string& benchmark_path,
              const std::vector<std::string>& ablations, std::int64_t seed_override) {
    require_file(config_path);
    require_file(dataset_path);
    TrainConfig config = load_config(config_path);
    for (const auto& a : ablations) {
        if (a == "no_matching") config.no_matching = true;
        else if (a == "no_hns") config.no_hns = true;
        else if (a == "fixed_arcface") config.fixed_arcface = true;
        else throw ConfigError("unknown ablation flag: " + a);
    }
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    config.validate();

    const auto images = load_dataset(dataset_path);
    Benchmark bench;
    const Benchmark* bench_ptr = nullptr;
    if (!benchmark_path.empty()) {
        require_file(benchmark_path);
        bench = load_benchmark(benchmark_path);
        bench_ptr = &bench;
    }

    fs::create_directories(out_dir);
    auto sink = [&](std::size_t epoch, const ToyModel& model) {
        char name[64];
        std::snprintf(name, sizeof name, "/checkpoint_%03zu.ckpt", epoch);
        save_checkpoint(model, out_dir + name);
    };
    const TrainResult result = train(images, config, bench_ptr, sink);
    save_checkpoint(result.model, out_dir + "/final.ckpt");
    write_train_log_csv(result.log, out_dir + "/train_log.csv");
    write_epoch_log_csv(result.log, out_dir + "/train_epochs.csv");
    std::cout << "trained " << config.total_epochs << " epochs, "
              << result.log.steps.size() << " steps; outputs in " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             const std::string& benchmark_path, const std::string& scales_arg,
             const std::string& out_path) {
    require_file(checkpoint_path);
    require_file(dataset_path);
    require_file(benchmark_path);
    const ToyModel model = load_checkpoint(checkpoint_path);
    const auto images = load_dataset(dataset_path);
    const Benchmark bench = load_benchmark(benchmark_path);
    const auto scales = parse_scales(scales_arg);

    std::unordered_map<ImageId, const ImageRecord*> by_id;
    for (const auto& img : images) by_id[img.id] = &img;
    std::vector<std::pair<ImageId, std::vector<double>>> db;
    for (ImageId id : bench.database)
        db.emplace_back(id, extract_global(model, by_id.at(id)->grid, scales));
    std::map<ImageId, std::vector<ImageId>> rankings;
    for (ImageId q : bench.queries)
        rankings[q] = rank(extract_global(model, by_id.at(q)->grid, scales), db);
    const MapResult result = mean_average_precision(bench, rankings);

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + out_path);
    out << "# split=" << bench.split << " scales=" << scales_arg
        << " n_scales=" << scales.size() << "\n";
    out << "query,ap\n";
    for (const auto& [q, ap] : result.per_query_ap) out << q << ',' << fmt(ap) << "\n";
    out << "mAP," << fmt(result.map) << "\n";
    std::cout << bench.split << " mAP = " << fmt(result.map) << "\n";
    return 0;
}

void write_hist_csv(const std::vector<std::size_t>& hist, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + path);
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < hist.size(); ++i)
        out << fmt(LogitDiagnostics::kLo + LogitDiagnostics::kBinWidth * i) << ','
            << fmt(LogitDiagnostics::kLo + LogitDiagnostics::kBinWidth * (i + 1)) << ','
            << hist[i] << "\n";
}

int cmd_diagnose(const std::string& checkpoint_path, const std::string& dataset_path,
                 const std::string& trainlog_path, double margin, const std::string& out_dir) {
    require_file(checkpoint_path);
    require_file(dataset_path);
    const ToyModel model = load_checkpoint(checkpoint_path);
    const auto images = load_dataset(dataset_path);
    const auto diag = logit_diagnostics(model, images, margin);

    fs::create_directories(out_dir);
    write_hist_csv(diag.target_hist, out_dir + "/hist_target.csv");
    write_hist_csv(diag.gap_hist, out_dir + "/hist_gap.csv");
    write_hist_csv(diag.gap_margin_hist, out_dir + "/hist_gap_margin.csv");
    {
        std::ofstream out(out_dir + "/summary.csv", std::ios::trunc);
        out << "n_samples,negative_gap_fraction\n";
        out << diag.n_samples << ',' << fmt(diag.negative_gap_fraction) << "\n";
    }

    Series gap{"gap", {}, {}};
    Series gap_m{"gap+margin", {}, {}};
    for (std::size_t i = 0; i < LogitDiagnostics::kBins; ++i) {
        const double mid = LogitDiagnostics::kLo + LogitDiagnostics::kBinWidth * (i + 0.5);
        gap.x.push_back(mid);
        gap.y.push_back(static_cast<double>(diag.gap_hist[i]));
        gap_m.x.push_back(mid);
        gap_m.y.push_back(static_cast<double>(diag.gap_margin_hist[i]));
    }
    write_svg(svg_line_plot("target vs max non-target logit gap", "gap", "count",
                            {gap, gap_m}),
              out_dir + "/gap_hist.svg");

    if (!trainlog_path.empty()) {
        require_file(trainlog_path);
        std::ifstream in(trainlog_path);
        std::string line;
        std::getline(in, line);  // header
        Series s_series{"scale s", {}, {}};
        Series m_series{"margin m", {}, {}};
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string tok;
            std::vector<std::string> cols;
            while (std::getline(ss, tok, ',')) cols.push_back(tok);
            if (cols.size() < 9) continue;
            const double step = std::stod(cols[1]);
            s_series.x.push_back(step);
            s_series.y.push_back(std::stod(cols[5]));
            m_series.x.push_back(step);
            m_series.y.push_back(std::stod(cols[6]));
        }
        write_svg(svg_line_plot("adaptive scale and margin during training", "step", "value",
                                {s_series, m_series}),
                  out_dir + "/scale_margin.svg");
    }
    std::cout << "negative gap fraction = " << fmt(diag.negative_gap_fraction)
              << " over " << diag.n_samples << " samples\n";
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& dataset_path,
                const std::string& medium_path, const std::string& hard_path,
                const std::string& out_path) {
    require_file(config_path);
    require_file(dataset_path);
    require_file(medium_path);
    require_file(hard_path);
    const TrainConfig base = load_config(config_path);
    const auto images = load_dataset(dataset_path);
    const Benchmark medium = load_benchmark(medium_path);
    const Benchmark hard = load_benchmark(hard_path);

    struct Row {
        std::string loss;
        double rho;
        TrainConfig config;
    };
    std::vector<Row> rows;
    {
        TrainConfig c = base;
        c.loss = LossKind::arcface;
        rows.push_back({"arcface", 0.0, c});
        c.loss = LossKind::cosface;
        rows.push_back({"cosface", 0.0, c});
        c.loss = LossKind::adacos;
        rows.push_back({"adacos", 0.0, c});
        for (double rho : {0.01, 0.02, 0.03, 0.04, 0.05}) {
            c.loss = LossKind::madacos;
            c.rho = rho;
            rows.push_back({"madacos", rho, c});
        }
    }

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + out_path);
    out << "loss,rho,map_medium,map_hard,final_s,final_m\n";
    const std::array scales{1.0};
    for (const auto& row : rows) {
        const TrainResult result = train(images, row.config);
        const double m_med = evaluate_map(result.model, images, medium, scales);
        const double m_hard = evaluate_map(result.model, images, hard, scales);
        const auto& last = result.log.steps.back();
        out << row.loss << ',' << fmt(row.rho) << ',' << fmt(m_med) << ',' << fmt(m_hard)
            << ',' << fmt(last.s) << ',' << fmt(last.m) << "\n";
        std::cout << row.loss << " rho=" << row.rho << " medium=" << fmt(m_med)
                  << " hard=" << fmt(m_hard) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CFCD desk-scale training and evaluation laboratory"};
    app.require_subcommand(1);

    std::string spec_path, config_path, dataset_path, benchmark_path, checkpoint_path;
    std::string medium_path, hard_path, trainlog_path, out_path = "out";
    std::string scales_arg = "1";
    std::vector<std::string> ablations;
    std::int64_t seed_override = -1;
    double margin = 0.0;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset + benchmarks");
    gen->add_option("--spec", spec_path, "JSON spec file")->required();
    gen->add_option("--out", out_path, "output directory");

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config_path, "key=value config file")->required();
    tr->add_option("--dataset", dataset_path, "dataset JSON-lines file")->required();
    tr->add_option("--benchmark", benchmark_path, "optional benchmark for per-epoch mAP");
    tr->add_option("--out", out_path, "output directory");
    tr->add_option("--ablation", ablations, "no_matching | no_hns | fixed_arcface");
    tr->add_option("--seed", seed_override, "override the config seed");

    auto* ev = app.add_subcommand("eval", "evaluate retrieval mAP");
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--dataset", dataset_path)->required();
    ev->add_option("--benchmark", benchmark_path)->required();
    ev->add_option("--scales", scales_arg, "1 | 3 | 5 | comma-separated scales");
    ev->add_option("--out", out_path, "output CSV path");

    auto* di = app.add_subcommand("diagnose", "logit distribution diagnostics");
    di->add_option("--checkpoint", checkpoint_path)->required();
    di->add_option("--dataset", dataset_path)->required();
    di->add_option("--trainlog", trainlog_path, "train_log.csv for scale/margin plot");
    di->add_option("--margin", margin, "margin for the cos(theta+m) gap variant");
    di->add_option("--out", out_path, "output directory");

    auto* cp = app.add_subcommand("compare", "loss comparison sweep");
    cp->add_option("--config", config_path)->required();
    cp->add_option("--dataset", dataset_path)->required();
    cp->add_option("--benchmark-medium", medium_path)->required();
    cp->add_option("--benchmark-hard", hard_path)->required();
    cp->add_option("--out", out_path, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(spec_path, out_path);
        if (tr->parsed())
            return cmd_train(config_path, dataset_path, out_path == "out" ? "out" : out_path,
                             benchmark_path, ablations, seed_override);
        if (ev->parsed())
            return cmd_eval(checkpoint_path, dataset_path, benchmark_path, scales_arg,
                            out_path == "out" ? "eval.csv" : out_path);
        if (di->parsed())
            return cmd_diagnose(checkpoint_path, dataset_path, trainlog_path, margin, out_path);
        if (cp->parsed())
            return cmd_compare(config_path, dataset_path, medium_path, hard_path,
                               out_path == "out" ? "compare.csv" : out_path);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
