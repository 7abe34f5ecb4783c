#pragma once

#include <functional>
#include <optional>
#include <string>

#include "cfcd/data.hpp"
#include "cfcd/eval.hpp"
#include "cfcd/losses.hpp"
#include "cfcd/model.hpp"
#include "cfcd/sampler.hpp"

namespace cfcd {

enum class LossKind { madacos, arcface, cosface, adacos, plain_softmax };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

struct TrainConfig {
    std::size_t total_epochs = 25;     // T
    std::size_t phase1_epochs = 20;    // E
    std::size_t batch_size = 32;       // N
    double lr0 = 0.01;
    double lr2 = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lambda = 0.05;
    double rho = 0.02;
    double eps = 0.0;                  // 0 means the e^-7 default
    double tau = 30.0;
    double mu = 0.1;
    std::size_t q = 6;
    std::uint64_t seed = 0;

    LossKind loss = LossKind::madacos;
    double arcface_s = 30.0;
    double arcface_m = 0.15;
    double cosface_s = 48.33;
    double cosface_m = 0.33;

    bool no_matching = false;
    bool no_hns = false;
    bool fixed_arcface = false;

    std::size_t d_c = 32;
    std::size_t d_g = 64;

    void validate() const;
};

TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& config, const std::string& path);

struct StepRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss_mda = 0.0;
    double loss_trip = 0.0;
    double total = 0.0;
    double s = 0.0;
    double m = 0.0;
    double cos_m = 0.0;
    double lr = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_accuracy = 0.0;
    double val_map = -1.0;  // -1 when no benchmark was supplied
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

void write_train_log_csv(const TrainLog& log, const std::string& path);
void write_epoch_log_csv(const TrainLog& log, const std::string& path);

double cosine_lr(std::size_t step, std::size_t steps_in_phase, double lr_start);

struct TrainResult {
    ToyModel model;
    TrainLog log;
    PredictionTable predictions;  // frozen at epoch E; empty when E = T
};

using CheckpointSink = std::function<void(std::size_t epoch, const ToyModel&)>;

TrainResult train(std::span<const ImageRecord> images, const TrainConfig& config,
                  const Benchmark* validation = nullptr,
                  const CheckpointSink& checkpoint_sink = {});

}  // namespace cfcd
