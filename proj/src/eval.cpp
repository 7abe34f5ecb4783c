#include "cfcd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace cfcd {

Grid3 resize_grid(const Grid3& input, double scale) {
    if (!(scale > 0.0)) throw ShapeMismatch("scale must be positive");
    const auto new_w = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(scale * static_cast<double>(input.width))));
    const auto new_h = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::round(scale * static_cast<double>(input.height))));
    if (new_w == input.width && new_h == input.height) return input;

    Grid3 out(input.channels, new_w, new_h);
    for (std::size_t r = 0; r < new_h; ++r) {
        // Align corners when possible so scale 1 is the identity.
        const double src_r = new_h == 1 ? 0.0
                                        : static_cast<double>(r) *
                                              static_cast<double>(input.height - 1) /
                                              static_cast<double>(new_h - 1);
        const auto r0 = static_cast<std::size_t>(std::floor(src_r));
        const std::size_t r1 = std::min(r0 + 1, input.height - 1);
        const double fr = src_r - static_cast<double>(r0);
        for (std::size_t c = 0; c < new_w; ++c) {
            const double src_c = new_w == 1 ? 0.0
                                            : static_cast<double>(c) *
                                                  static_cast<double>(input.width - 1) /
                                                  static_cast<double>(new_w - 1);
            const auto c0 = static_cast<std::size_t>(std::floor(src_c));
            const std::size_t c1 = std::min(c0 + 1, input.width - 1);
            const double fc = src_c - static_cast<double>(c0);
            for (std::size_t ch = 0; ch < input.channels; ++ch) {
                const double top =
                    (1.0 - fc) * input.at(ch, r0, c0) + fc * input.at(ch, r0, c1);
                const double bot =
                    (1.0 - fc) * input.at(ch, r1, c0) + fc * input.at(ch, r1, c1);
                out.at(ch, r, c) = (1.0 - fr) * top + fr * bot;
            }
        }
    }
    return out;
}

std::vector<double> extract_global(const ToyModel& model, const Grid3& input,
                                   std::span<const double> scales) {
    if (scales.empty()) throw ShapeMismatch("scale list is empty");
    std::vector<double> acc(model.global_dim(), 0.0);
    for (double s : scales) {
        const Grid3 resized = resize_grid(input, s);
        const auto rec = forward(model, resized);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += rec.global[k];
    }
    for (double& v : acc) v /= static_cast<double>(scales.size());
    return l2_normalize(acc);
}

std::vector<ImageId> rank(std::span<const double> query,
                          const std::vector<std::pair<ImageId, std::vector<double>>>& database) {
    if (database.empty()) throw Error("empty database");
    std::vector<std::pair<double, ImageId>> scored;
    scored.reserve(database.size());
    for (const auto& [id, desc] : database) {
        double dot = 0.0;
        for (std::size_t k = 0; k < query.size(); ++k) dot += query[k] * desc[k];
        scored.emplace_back(dot, id);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<ImageId> out;
    out.reserve(scored.size());
    for (const auto& [score, id] : scored) out.push_back(id);
    return out;
}

MapResult mean_average_precision(const Benchmark& bench,
                                 const std::map<ImageId, std::vector<ImageId>>& rankings) {
    MapResult result;
    double total = 0.0;
    std::size_t counted = 0;
    for (ImageId q : bench.queries) {
        const auto pos_it = bench.positives.find(q);
        if (pos_it == bench.positives.end() || pos_it->second.empty()) continue;
        const std::unordered_set<ImageId> positives(pos_it->second.begin(), pos_it->second.end());
        std::unordered_set<ImageId> junk;
        if (const auto junk_it = bench.junk.find(q); junk_it != bench.junk.end())
            junk.insert(junk_it->second.begin(), junk_it->second.end());

        const auto& ranking = rankings.at(q);
        std::size_t filtered_rank = 0;
        std::size_t hits = 0;
        double ap = 0.0;
        for (ImageId id : ranking) {
            if (junk.count(id)) continue;
            ++filtered_rank;
            if (positives.count(id)) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(filtered_rank);
            }
        }
        ap /= static_cast<double>(positives.size());
        result.per_query_ap[q] = ap;
        total += ap;
        ++counted;
    }
    if (counted == 0) throw EmptyBenchmark{};
    result.map = total / static_cast<double>(counted);
    return result;
}

std::size_t LogitDiagnostics::bin_of(double v) {
    if (v <= kLo) return 0;
    if (v >= kHi) return kBins - 1;
    return static_cast<std::size_t>((v - kLo) / kBinWidth);
}

LogitDiagnostics logit_diagnostics(const ToyModel& model,
                                   std::span<const ImageRecord> dataset, double margin) {
    LogitDiagnostics diag;
    diag.target_hist.assign(LogitDiagnostics::kBins, 0);
    diag.gap_hist.assign(LogitDiagnostics::kBins, 0);
    diag.gap_margin_hist.assign(LogitDiagnostics::kBins, 0);
    std::size_t negative = 0;
    for (const auto& img : dataset) {
        const auto rec = forward(model, img.grid);
        const auto y = static_cast<std::size_t>(img.label);
        if (y >= rec.logits.size()) throw InvalidLabel{};
        const double target = rec.logits[y];
        double best_other = -2.0;
        for (std::size_t j = 0; j < rec.logits.size(); ++j)
            if (j != y) best_other = std::max(best_other, rec.logits[j]);
        const double gap = target - best_other;
        const double theta = std::acos(std::clamp(target, -1.0 + 1e-7, 1.0 - 1e-7));
        const double gap_margin = std::cos(theta + margin) - best_other;
        ++diag.target_hist[LogitDiagnostics::bin_of(target)];
        ++diag.gap_hist[LogitDiagnostics::bin_of(gap)];
        ++diag.gap_margin_hist[LogitDiagnostics::bin_of(gap_margin)];
        if (gap < 0.0) ++negative;
        ++diag.n_samples;
    }
    diag.negative_gap_fraction =
        diag.n_samples == 0 ? 0.0
                            : static_cast<double>(negative) / static_cast<double>(diag.n_samples);
    return diag;
}

double evaluate_map(const ToyModel& model, std::span<const ImageRecord> images,
                    const Benchmark& bench, std::span<const double> scales) {
    std::unordered_map<ImageId, const ImageRecord*> by_id;
    for (const auto& img : images) by_id[img.id] = &img;

    std::vector<std::pair<ImageId, std::vector<double>>> db;
    db.reserve(bench.database.size());
    for (ImageId id : bench.database)
        db.emplace_back(id, extract_global(model, by_id.at(id)->grid, scales));

    std::map<ImageId, std::vector<ImageId>> rankings;
    for (ImageId q : bench.queries) {
        const auto desc = extract_global(model, by_id.at(q)->grid, scales);
        rankings[q] = rank(desc, db);
    }
    return mean_average_precision(bench, rankings).map;
}

}  // namespace cfcd
