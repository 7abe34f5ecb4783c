#include "cfcd/trainer.hpp"

#include "cfcd/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace cfcd {

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "madacos") return LossKind::madacos;
    if (name == "arcface") return LossKind::arcface;
    if (name == "cosface") return LossKind::cosface;
    if (name == "adacos") return LossKind::adacos;
    if (name == "plain_softmax") return LossKind::plain_softmax;
    throw ConfigError("unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::madacos: return "madacos";
        case LossKind::arcface: return "arcface";
        case LossKind::cosface: return "cosface";
        case LossKind::adacos: return "adacos";
        case LossKind::plain_softmax: return "plain_softmax";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (phase1_epochs > total_epochs) throw ConfigError("E must not exceed T");
    if (batch_size < 2) throw ConfigError("batch size must be >= 2");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (!(rho > 0.0 && rho < 0.5)) throw ConfigError("rho must lie in (0, 0.5)");
    if (eps < 0.0 || eps >= 1e-3) throw ConfigError("eps must lie in [0, 1e-3)");
    if (!(tau > 0.0 && tau <= 100.0)) throw ConfigError("tau must lie in (0, 100]");
    if (mu < 0.0) throw ConfigError("mu must be >= 0");
    if (q < 1) throw ConfigError("Q must be >= 1");
    if (d_c < 1 || d_g < 1) throw ConfigError("model dims must be >= 1");
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    TrainConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        try {
            if (key == "total_epochs") cfg.total_epochs = std::stoul(val);
            else if (key == "phase1_epochs") cfg.phase1_epochs = std::stoul(val);
            else if (key == "batch_size") cfg.batch_size = std::stoul(val);
            else if (key == "lr0") cfg.lr0 = std::stod(val);
            else if (key == "lr2") cfg.lr2 = std::stod(val);
            else if (key == "momentum") cfg.momentum = std::stod(val);
            else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
            else if (key == "lambda") cfg.lambda = std::stod(val);
            else if (key == "rho") cfg.rho = std::stod(val);
            else if (key == "eps") cfg.eps = std::stod(val);
            else if (key == "tau") cfg.tau = std::stod(val);
            else if (key == "mu") cfg.mu = std::stod(val);
            else if (key == "q") cfg.q = std::stoul(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "loss") cfg.loss = loss_kind_from_string(val);
            else if (key == "arcface_s") cfg.arcface_s = std::stod(val);
            else if (key == "arcface_m") cfg.arcface_m = std::stod(val);
            else if (key == "cosface_s") cfg.cosface_s = std::stod(val);
            else if (key == "cosface_m") cfg.cosface_m = std::stod(val);
            else if (key == "no_matching") cfg.no_matching = val == "1" || val == "true";
            else if (key == "no_hns") cfg.no_hns = val == "1" || val == "true";
            else if (key == "fixed_arcface") cfg.fixed_arcface = val == "1" || val == "true";
            else if (key == "d_c") cfg.d_c = std::stoul(val);
            else if (key == "d_g") cfg.d_g = std::stoul(val);
            else throw ConfigError("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw ConfigError("bad value for key " + key + ": " + val);
        }
    }
    cfg.validate();
    return cfg;
}

void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("cannot open config file for writing: " + path);
    out << "total_epochs = " << cfg.total_epochs << "\n";
    out << "phase1_epochs = " << cfg.phase1_epochs << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "lr0 = " << fmt(cfg.lr0) << "\n";
    out << "lr2 = " << fmt(cfg.lr2) << "\n";
    out << "momentum = " << fmt(cfg.momentum) << "\n";
    out << "weight_decay = " << fmt(cfg.weight_decay) << "\n";
    out << "lambda = " << fmt(cfg.lambda) << "\n";
    out << "rho = " << fmt(cfg.rho) << "\n";
    out << "eps = " << fmt(cfg.eps) << "\n";
    out << "tau = " << fmt(cfg.tau) << "\n";
    out << "mu = " << fmt(cfg.mu) << "\n";
    out << "q = " << cfg.q << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "loss = " << to_string(cfg.loss) << "\n";
    out << "arcface_s = " << fmt(cfg.arcface_s) << "\n";
    out << "arcface_m = " << fmt(cfg.arcface_m) << "\n";
    out << "cosface_s = " << fmt(cfg.cosface_s) << "\n";
    out << "cosface_m = " << fmt(cfg.cosface_m) << "\n";
    out << "no_matching = " << (cfg.no_matching ? 1 : 0) << "\n";
    out << "no_hns = " << (cfg.no_hns ? 1 : 0) << "\n";
    out << "fixed_arcface = " << (cfg.fixed_arcface ? 1 : 0) << "\n";
    out << "d_c = " << cfg.d_c << "\n";
    out << "d_g = " << cfg.d_g << "\n";
}

double cosine_lr(std::size_t step, std::size_t steps_in_phase, double lr_start) {
    return lr_start * 0.5 *
           (1.0 + std::cos(M_PI * static_cast<double>(step) /
                           static_cast<double>(steps_in_phase)));
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open log file for writing: " + path);
    out << "epoch,step,loss_mda,loss_trip,total,s,m,cos_m,lr\n";
    for (const auto& r : log.steps)
        out << r.epoch << ',' << r.step << ',' << fmt(r.loss_mda) << ',' << fmt(r.loss_trip)
            << ',' << fmt(r.total) << ',' << fmt(r.s) << ',' << fmt(r.m) << ','
            << fmt(r.cos_m) << ',' << fmt(r.lr) << "\n";
}

void write_epoch_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open log file for writing: " + path);
    out << "epoch,train_accuracy,val_map\n";
    for (const auto& r : log.epochs)
        out << r.epoch << ',' << fmt(r.train_accuracy) << ',' << fmt(r.val_map) << "\n";
}

namespace {

struct Optimizer {
    ModelGrads velocity;
    double momentum;
    double weight_decay;

    explicit Optimizer(const ToyModel& model, double mom, double wd)
        : velocity(zero_grads(model)), momentum(mom), weight_decay(wd) {}

    void step(ToyModel& model, const ModelGrads& grads, double lr) {
        auto update = [&](std::vector<double>& w, std::vector<double>& v,
                          const std::vector<double>& g) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = momentum * v[i] - lr * (g[i] + weight_decay * w[i]);
                w[i] += v[i];
            }
        };
        update(model.encoder.values, velocity.encoder.values, grads.encoder.values);
        update(model.whitening.values, velocity.whitening.values, grads.whitening.values);
        update(model.whitening_bias, velocity.whitening_bias, grads.whitening_bias);
        update(model.classifier.values, velocity.classifier.values, grads.classifier.values);
        model.bump_version();
    }
};

struct LossTelemetry {
    double s = 0.0;
    double m = 0.0;
    double cos_m = 0.0;
};

LossResult classification_loss(const BatchLogits& batch, const TrainConfig& cfg,
                               MadaCosState& state, LossTelemetry& tele) {
    if (cfg.fixed_arcface || cfg.loss == LossKind::arcface) {
        tele = {cfg.arcface_s, cfg.arcface_m, 0.0};
        return unified_margin_loss(batch, MarginParams::arcface(cfg.arcface_s, cfg.arcface_m));
    }
    switch (cfg.loss) {
        case LossKind::cosface:
            tele = {cfg.cosface_s, cfg.cosface_m, 0.0};
            return unified_margin_loss(batch,
                                       MarginParams::cosface(cfg.cosface_s, cfg.cosface_m));
        case LossKind::adacos:
            tele = {adacos_scale(batch.n_classes()), 0.0, 0.0};
            return adacos_baseline(batch, batch.n_classes());
        case LossKind::plain_softmax:
            tele = {cfg.arcface_s, 0.0, 0.0};
            return unified_margin_loss(batch, MarginParams::plain(cfg.arcface_s));
        default: {
            auto result = madacos_step(batch, state);
            tele = {state.s, state.m, state.cos_m};
            return result;
        }
    }
}

// Class-balanced epoch order: shuffle each class, round-robin interleave.
std::vector<std::size_t> balanced_order(const std::vector<std::vector<std::size_t>>& by_class,
                                        std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> shuffled = by_class;
    for (auto& members : shuffled) std::shuffle(members.begin(), members.end(), rng);
    std::vector<std::size_t> order;
    bool more = true;
    for (std::size_t round = 0; more; ++round) {
        more = false;
        for (const auto& members : shuffled)
            if (round < members.size()) {
                order.push_back(members[round]);
                more = true;
            }
    }
    return order;
}

// Pre-whitening pooled-descriptor triplet loss for the no-matching ablation.
double pooled_triplet(const std::vector<double>& ga, const std::vector<double>& gp,
                      const std::vector<const std::vector<double>*>& gns, double mu,
                      std::vector<double>& da, std::vector<double>& dp,
                      std::vector<std::vector<double>>& dns) {
    const std::size_t d = ga.size();
    da.assign(d, 0.0);
    dp.assign(d, 0.0);
    dns.assign(gns.size(), std::vector<double>(d, 0.0));
    double d_ap = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = ga[k] - gp[k];
        d_ap += diff * diff;
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < gns.size(); ++j) {
        const auto& gn = *gns[j];
        double d_an = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = ga[k] - gn[k];
            d_an += diff * diff;
        }
        const double hinge = d_ap - d_an + mu;
        if (hinge <= 0.0) continue;
        loss += hinge;
        for (std::size_t k = 0; k < d; ++k) {
            da[k] += 2.0 * (ga[k] - gp[k]) - 2.0 * (ga[k] - gn[k]);
            dp[k] += -2.0 * (ga[k] - gp[k]);
            dns[j][k] += 2.0 * (ga[k] - gn[k]);
        }
    }
    return loss;
}

}  // namespace

TrainResult train(std::span<const ImageRecord> images, const TrainConfig& config,
                  const Benchmark* validation, const CheckpointSink& checkpoint_sink) {
    config.validate();
    if (images.empty()) throw ConfigError("empty dataset");

    std::size_t n_classes = 0;
    for (const auto& img : images) {
        if (img.label < 0) throw ConfigError("negative label");
        n_classes = std::max(n_classes, static_cast<std::size_t>(img.label) + 1);
    }
    if (n_classes < 2) throw ConfigError("need at least 2 classes");

    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < images.size(); ++i)
        by_class[static_cast<std::size_t>(images[i].label)].push_back(i);

    std::unordered_map<ImageId, std::size_t> index_of;
    std::map<ImageId, ClassId> labels;
    for (std::size_t i = 0; i < images.size(); ++i) {
        index_of[images[i].id] = i;
        labels[images[i].id] = images[i].label;
    }

    TrainResult result;
    result.model = make_model(images[0].grid.channels, config.d_c, config.d_g, n_classes,
                              config.seed);
    ToyModel& model = result.model;
    Optimizer opt(model, config.momentum, config.weight_decay);
    MadaCosState mda_state = config.eps > 0.0 ? MadaCosState(config.rho, config.eps)
                                              : MadaCosState();
    mda_state.rho = config.rho;
    std::mt19937_64 shuffle_rng(config.seed ^ 0xc0ffee1234567ULL);

    const std::size_t T = config.total_epochs;
    const std::size_t E = config.phase1_epochs;
    std::size_t global_step = 0;

    const std::size_t p1_batches_per_epoch =
        images.size() / config.batch_size + (images.size() % config.batch_size >= 2 ? 1 : 0);
    const std::size_t p1_steps = E * p1_batches_per_epoch;

    const std::size_t tuples_per_batch = std::max<std::size_t>(1, config.batch_size / (config.q + 2));
    const std::size_t p2_batches_per_epoch =
        (images.size() + tuples_per_batch - 1) / tuples_per_batch;
    const std::size_t p2_steps = (T - E) * p2_batches_per_epoch;

    auto run_classification_batch = [&](const std::vector<std::size_t>& batch_idx, double lr,
                                        std::size_t epoch, std::size_t& correct) {
        std::vector<ForwardRecord> records;
        records.reserve(batch_idx.size());
        BatchLogits batch;
        batch.logits = Matrix(batch_idx.size(), n_classes);
        for (std::size_t b = 0; b < batch_idx.size(); ++b) {
            const auto& img = images[batch_idx[b]];
            records.push_back(forward(model, img.grid));
            for (std::size_t j = 0; j < n_classes; ++j)
                batch.logits(b, j) = records.back().logits[j];
            batch.labels.push_back(static_cast<std::size_t>(img.label));
            const auto best = std::max_element(records.back().logits.begin(),
                                               records.back().logits.end());
            if (static_cast<std::size_t>(best - records.back().logits.begin()) ==
                batch.labels.back())
                ++correct;
        }
        LossTelemetry tele;
        const LossResult loss = classification_loss(batch, config, mda_state, tele);
        ModelGrads grads = zero_grads(model);
        for (std::size_t b = 0; b < batch_idx.size(); ++b) {
            Upstream up;
            up.d_logits.assign(batch.logits.row(b).begin(), batch.logits.row(b).end());
            for (std::size_t j = 0; j < n_classes; ++j) up.d_logits[j] = loss.grad(b, j);
            grads.accumulate(backward(model, records[b], up));
        }
        opt.step(model, grads, lr);
        result.log.steps.push_back({epoch, global_step, loss.loss, 0.0, loss.loss, tele.s,
                                    tele.m, tele.cos_m, lr});
        ++global_step;
    };

    // Phase 1: classification only, cosine decay from lr0 over E epochs.
    for (std::size_t epoch = 1; epoch <= E; ++epoch) {
        const auto order = balanced_order(by_class, shuffle_rng);
        std::size_t correct = 0;
        std::size_t seen = 0;
        std::size_t phase_step = (epoch - 1) * p1_batches_per_epoch;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            if (end - start < 2) break;
            std::vector<std::size_t> batch_idx(order.begin() + static_cast<long>(start),
                                               order.begin() + static_cast<long>(end));
            const double lr = cosine_lr(phase_step, p1_steps, config.lr0);
            run_classification_batch(batch_idx, lr, epoch, correct);
            seen += batch_idx.size();
            ++phase_step;
        }
        EpochRecord er;
        er.epoch = epoch;
        er.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        if (validation) er.val_map = evaluate_map(model, images, *validation, std::array{1.0});
        result.log.epochs.push_back(er);
        if (checkpoint_sink) checkpoint_sink(epoch, model);
    }

    if (E < T) {
        // Freeze whole-dataset predictions at the phase boundary.
        for (const auto& img : images) {
            const auto rec = forward(model, img.grid);
            const auto best = std::max_element(rec.logits.begin(), rec.logits.end());
            result.predictions[img.id] =
                static_cast<ClassId>(best - rec.logits.begin());
        }
    }

    // Phase 2: joint classification + matched-descriptor triplets over
    // sampler-built tuples, LR restarted at lr2.
    for (std::size_t epoch = E + 1; epoch <= T; ++epoch) {
        const std::uint64_t epoch_seed = config.seed * 7919ULL + epoch;
        const auto tuples = config.no_hns
                                ? build_epoch_triplets_random(labels, config.q, epoch_seed)
                                : build_epoch_triplets(labels, result.predictions, config.q,
                                                       epoch_seed);
        std::size_t correct = 0;
        std::size_t seen = 0;
        std::size_t phase_step = (epoch - E - 1) * p2_batches_per_epoch;
        for (std::size_t start = 0; start < tuples.size(); start += tuples_per_batch) {
            const std::size_t end = std::min(tuples.size(), start + tuples_per_batch);
            const double lr = cosine_lr(std::min(phase_step, p2_steps - 1), p2_steps, config.lr2);

            // Unique images of this tuple batch, in first-appearance order.
            std::vector<std::size_t> batch_idx;
            std::unordered_map<std::size_t, std::size_t> local_of;
            auto add = [&](ImageId id) {
                const std::size_t idx = index_of.at(id);
                if (local_of.emplace(idx, batch_idx.size()).second) batch_idx.push_back(idx);
            };
            for (std::size_t t = start; t < end; ++t) {
                add(tuples[t].anchor);
                add(tuples[t].positive);
                for (ImageId n : tuples[t].negatives) add(n);
            }

            std::vector<ForwardRecord> records;
            records.reserve(batch_idx.size());
            BatchLogits batch;
            batch.logits = Matrix(batch_idx.size(), n_classes);
            for (std::size_t b = 0; b < batch_idx.size(); ++b) {
                const auto& img = images[batch_idx[b]];
                records.push_back(forward(model, img.grid));
                for (std::size_t j = 0; j < n_classes; ++j)
                    batch.logits(b, j) = records.back().logits[j];
                batch.labels.push_back(static_cast<std::size_t>(img.label));
                const auto best = std::max_element(records.back().logits.begin(),
                                                   records.back().logits.end());
                if (static_cast<std::size_t>(best - records.back().logits.begin()) ==
                    batch.labels.back())
                    ++correct;
            }
            seen += batch_idx.size();

            LossTelemetry tele;
            const LossResult mda = classification_loss(batch, config, mda_state, tele);

            std::vector<Grid3> d_local(batch_idx.size());
            std::vector<std::vector<double>> d_pooled(batch_idx.size());
            double trip_loss = 0.0;
            if (config.lambda > 0.0) {
                for (std::size_t t = start; t < end; ++t) {
                    const auto& tup = tuples[t];
                    const std::size_t la = local_of.at(index_of.at(tup.anchor));
                    const std::size_t lp = local_of.at(index_of.at(tup.positive));
                    std::vector<std::size_t> ln;
                    for (ImageId n : tup.negatives) ln.push_back(local_of.at(index_of.at(n)));
                    if (config.no_matching) {
                        std::vector<const std::vector<double>*> gns;
                        for (std::size_t l : ln) gns.push_back(&records[l].pooled);
                        std::vector<double> da, dp;
                        std::vector<std::vector<double>> dns;
                        trip_loss += pooled_triplet(records[la].pooled, records[lp].pooled,
                                                    gns, config.mu, da, dp, dns);
                        auto acc = [&](std::size_t l, const std::vector<double>& g) {
                            if (d_pooled[l].empty()) d_pooled[l].assign(g.size(), 0.0);
                            for (std::size_t k = 0; k < g.size(); ++k) d_pooled[l][k] += g[k];
                        };
                        acc(la, da);
                        acc(lp, dp);
                        for (std::size_t j = 0; j < ln.size(); ++j) acc(ln[j], dns[j]);
                    } else {
                        const auto matches =
                            match_pairs(records[la].local, records[lp].local, config.tau);
                        std::vector<Grid3> neg_grids;
                        for (std::size_t l : ln) neg_grids.push_back(records[l].local);
                        const auto trip = local_triplet_loss(matches, records[la].local,
                                                             records[lp].local, neg_grids,
                                                             config.mu);
                        trip_loss += trip.loss;
                        auto acc = [&](std::size_t l, const Grid3& g) {
                            if (d_local[l].values.empty())
                                d_local[l] = Grid3(g.channels, g.width, g.height);
                            for (std::size_t k = 0; k < g.values.size(); ++k)
                                d_local[l].values[k] += g.values[k];
                        };
                        acc(la, trip.grad_anchor);
                        acc(lp, trip.grad_positive);
                        for (std::size_t j = 0; j < ln.size(); ++j)
                            acc(ln[j], trip.grad_negatives[j]);
                    }
                }
            }

            ModelGrads grads = zero_grads(model);
            for (std::size_t b = 0; b < batch_idx.size(); ++b) {
                Upstream up;
                up.d_logits.assign(n_classes, 0.0);
                for (std::size_t j = 0; j < n_classes; ++j) up.d_logits[j] = mda.grad(b, j);
                if (!d_local[b].values.empty()) {
                    up.d_local = d_local[b];
                    for (double& v : up.d_local.values) v *= config.lambda;
                }
                if (!d_pooled[b].empty()) {
                    up.d_pooled = d_pooled[b];
                    for (double& v : up.d_pooled) v *= config.lambda;
                }
                grads.accumulate(backward(model, records[b], up));
            }
            opt.step(model, grads, lr);
            const double total = mda.loss + config.lambda * trip_loss;
            result.log.steps.push_back({epoch, global_step, mda.loss, trip_loss, total,
                                        tele.s, tele.m, tele.cos_m, lr});
            ++global_step;
            ++phase_step;
        }
        EpochRecord er;
        er.epoch = epoch;
        er.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        if (validation) er.val_map = evaluate_map(model, images, *validation, std::array{1.0});
        result.log.epochs.push_back(er);
        if (checkpoint_sink) checkpoint_sink(epoch, model);
    }

    return result;
}

}  // namespace cfcd
