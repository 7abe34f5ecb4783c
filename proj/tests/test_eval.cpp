#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cfcd/eval.hpp"

using namespace cfcd;

namespace {

Grid3 random_input(std::mt19937_64& rng, std::size_t c, std::size_t w, std::size_t h) {
    Grid3 g(c, w, h);
    std::normal_distribution<double> dist;
    for (double& v : g.values) v = dist(rng);
    return g;
}

}  // namespace

TEST_CASE("single scale equals direct forward") {
    std::mt19937_64 rng(1);
    const ToyModel model = make_model(4, 6, 5, 3, 9);
    const auto input = random_input(rng, 4, 4, 4);
    const auto direct = forward(model, input);
    const auto multi = extract_global(model, input, std::array{1.0});
    for (std::size_t k = 0; k < multi.size(); ++k)
        CHECK(multi[k] == doctest::Approx(direct.global[k]).epsilon(1e-12));

    const auto dup = extract_global(model, input, std::array{1.0, 1.0});
    for (std::size_t k = 0; k < multi.size(); ++k)
        CHECK(dup[k] == doctest::Approx(multi[k]).epsilon(1e-12));
}

TEST_CASE("multi-scale output is unit norm") {
    std::mt19937_64 rng(2);
    const std::vector<double> three{1.0 / std::sqrt(2.0), 1.0, std::sqrt(2.0)};
    const std::vector<double> five{1.0 / (2.0 * std::sqrt(2.0)), 0.5, 1.0 / std::sqrt(2.0),
                                   1.0, std::sqrt(2.0)};
    for (int trial = 0; trial < 100; ++trial) {
        const ToyModel model = make_model(3, 5, 4, 3, trial);
        const auto input = random_input(rng, 3, 6, 6);
        for (const auto& scales : {three, five}) {
            const auto desc = extract_global(model, input, scales);
            CHECK(std::abs(norm2(desc) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("resize identity and minimum size") {
    std::mt19937_64 rng(3);
    const auto input = random_input(rng, 2, 5, 4);
    CHECK(resize_grid(input, 1.0) == input);
    const auto tiny = resize_grid(input, 0.01);
    CHECK(tiny.width == 1);
    CHECK(tiny.height == 1);
}

TEST_CASE("rank ordering and ties") {
    std::vector<std::pair<ImageId, std::vector<double>>> db;
    db.emplace_back(3, std::vector{1.0, 0.0});
    db.emplace_back(1, std::vector{0.0, 1.0});
    db.emplace_back(2, std::vector{1.0, 0.0});
    const auto order = rank(std::vector{1.0, 0.0}, db);
    CHECK(order == std::vector<ImageId>{2, 3, 1});
}

TEST_CASE("rank matches a full-sort oracle and is scale invariant") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<ImageId, std::vector<double>>> db;
        for (ImageId id = 0; id < 50; ++id) {
            std::vector<double> v(6);
            for (double& x : v) x = dist(rng);
            db.emplace_back(id, v);
        }
        std::vector<double> q(6);
        for (double& x : q) x = dist(rng);

        const auto got = rank(q, db);
        std::vector<std::pair<double, ImageId>> oracle;
        for (const auto& [id, v] : db) {
            double dot = 0.0;
            for (std::size_t k = 0; k < q.size(); ++k) dot += q[k] * v[k];
            oracle.emplace_back(-dot, id);
        }
        std::sort(oracle.begin(), oracle.end());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == oracle[i].second);

        auto scaled = db;
        for (auto& [id, v] : scaled)
            for (double& x : v) x *= 3.7;
        CHECK(rank(q, scaled) == got);
    }
}

TEST_CASE("mAP hand-computed cases") {
    Benchmark bench;
    bench.queries = {0};
    bench.database = {10, 11, 12, 13};
    bench.split = "medium";

    SUBCASE("all positives first") {
        bench.positives[0] = {10, 11};
        std::map<ImageId, std::vector<ImageId>> rankings{{0, {10, 11, 12, 13}}};
        CHECK(mean_average_precision(bench, rankings).map == doctest::Approx(1.0));
    }
    SUBCASE("single positive at rank 2") {
        bench.positives[0] = {11};
        std::map<ImageId, std::vector<ImageId>> rankings{{0, {10, 11, 12, 13}}};
        CHECK(mean_average_precision(bench, rankings).map == doctest::Approx(0.5));
    }
    SUBCASE("junk removed before scoring") {
        bench.positives[0] = {10, 12};
        bench.junk[0] = {11};
        // Raw ranking 10, 11, 12: junk 11 drops out, positives land at 1, 2.
        std::map<ImageId, std::vector<ImageId>> rankings{{0, {10, 11, 12, 13}}};
        CHECK(mean_average_precision(bench, rankings).map ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("no query with positives") {
        std::map<ImageId, std::vector<ImageId>> rankings{{0, {10, 11, 12, 13}}};
        CHECK_THROWS_AS(mean_average_precision(bench, rankings), EmptyBenchmark);
    }
}

TEST_CASE("mAP invariant to permuting junk and reversed-ranking closed form") {
    std::mt19937_64 rng(5);
    Benchmark bench;
    bench.queries = {0};
    for (ImageId id = 1; id <= 12; ++id) bench.database.push_back(id);
    bench.positives[0] = {1, 2, 3};
    bench.junk[0] = {4, 5, 6};

    std::vector<ImageId> ranking = bench.database;
    std::shuffle(ranking.begin(), ranking.end(), rng);
    const auto base =
        mean_average_precision(bench, {{0, ranking}}).map;
    // Swap junk items amongst themselves.
    std::vector<std::size_t> junk_at;
    for (std::size_t i = 0; i < ranking.size(); ++i)
        if (ranking[i] >= 4 && ranking[i] <= 6) junk_at.push_back(i);
    std::swap(ranking[junk_at[0]], ranking[junk_at[2]]);
    CHECK(mean_average_precision(bench, {{0, ranking}}).map == doctest::Approx(base));

    // Reversed perfect ranking: P positives at the tail of D entries.
    Benchmark rev;
    rev.queries = {0};
    const std::size_t d = 9, p = 3;
    std::vector<ImageId> worst;
    for (ImageId id = 1; id <= static_cast<ImageId>(d); ++id) rev.database.push_back(id);
    for (ImageId id = d; id >= 1; --id) worst.push_back(id);
    rev.positives[0] = {static_cast<ImageId>(d - 2), static_cast<ImageId>(d - 1),
                        static_cast<ImageId>(d)};  // ranked 1..3 reversed -> last
    // Positives are the ids ranked last in `worst`... construct directly:
    rev.positives[0] = {1, 2, 3};
    double closed = 0.0;
    for (std::size_t k = 1; k <= p; ++k)
        closed += static_cast<double>(k) / static_cast<double>(d - p + k);
    closed /= static_cast<double>(p);
    CHECK(mean_average_precision(rev, {{0, worst}}).map == doctest::Approx(closed));
}

TEST_CASE("logit diagnostics") {
    SUBCASE("gap equals two-pass oracle and histogram mass sums") {
        std::mt19937_64 rng(6);
        const ToyModel model = make_model(3, 4, 5, 4, 33);
        std::vector<ImageRecord> images;
        for (int i = 0; i < 40; ++i) {
            ImageRecord img;
            img.id = i;
            img.label = static_cast<ClassId>(i % 4);
            img.grid = random_input(rng, 3, 3, 3);
            images.push_back(std::move(img));
        }
        const auto diag = logit_diagnostics(model, images, 0.0);
        CHECK(diag.n_samples == images.size());
        std::size_t mass = 0;
        for (std::size_t c : diag.gap_hist) mass += c;
        CHECK(mass == images.size());

        std::size_t negative = 0;
        for (const auto& img : images) {
            const auto rec = forward(model, img.grid);
            double best = -2.0;
            for (std::size_t j = 0; j < rec.logits.size(); ++j)
                if (j != static_cast<std::size_t>(img.label))
                    best = std::max(best, rec.logits[j]);
            if (rec.logits[static_cast<std::size_t>(img.label)] - best < 0.0) ++negative;
        }
        CHECK(diag.negative_gap_fraction ==
              doctest::Approx(static_cast<double>(negative) / images.size()));
    }

    SUBCASE("untrained two-class models sit near fraction one half") {
        std::mt19937_64 rng(7);
        double total = 0.0;
        for (int seed = 0; seed < 5; ++seed) {
            const ToyModel model = make_model(3, 4, 5, 2, 1000 + seed);
            std::vector<ImageRecord> images;
            for (int i = 0; i < 200; ++i) {
                ImageRecord img;
                img.id = i;
                img.label = static_cast<ClassId>(i % 2);
                img.grid = random_input(rng, 3, 3, 3);
                images.push_back(std::move(img));
            }
            total += logit_diagnostics(model, images, 0.0).negative_gap_fraction;
        }
        CHECK(std::abs(total / 5.0 - 0.5) < 0.1);
    }
}
