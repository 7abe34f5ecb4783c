#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "cfcd/data.hpp"

using namespace cfcd;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec spec;
    spec.n_classes = 5;
    spec.samples_per_class = 10;
    spec.d_in = 6;
    spec.grid_w = 4;
    spec.grid_h = 4;
    spec.queries_per_class = 3;
    spec.seed = 42;
    return spec;
}

double mean_pool_accuracy(const Dataset& data, const SyntheticSpec& spec) {
    // Nearest-centroid classification on raw mean-pooled inputs.
    std::map<ClassId, std::vector<double>> centroids;
    std::map<ClassId, std::size_t> counts;
    auto mean_pool = [&](const Grid3& g) {
        std::vector<double> v(g.channels, 0.0);
        for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t i = 0; i < g.spatial_size(); ++i) v[c] += g.at_flat(c, i);
            v[c] /= static_cast<double>(g.spatial_size());
        }
        return v;
    };
    for (const auto& img : data.images) {
        const auto v = mean_pool(img.grid);
        auto& c = centroids[img.label];
        if (c.empty()) c.assign(spec.d_in, 0.0);
        for (std::size_t k = 0; k < v.size(); ++k) c[k] += v[k];
        ++counts[img.label];
    }
    for (auto& [cls, c] : centroids)
        for (double& x : c) x /= static_cast<double>(counts[cls]);
    std::size_t correct = 0;
    for (const auto& img : data.images) {
        const auto v = mean_pool(img.grid);
        ClassId best = -1;
        double best_d = 1e300;
        for (const auto& [cls, c] : centroids) {
            double d = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) d += (v[k] - c[k]) * (v[k] - c[k]);
            if (d < best_d) {
                best_d = d;
                best = cls;
            }
        }
        if (best == img.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.images.size());
}

}  // namespace

TEST_CASE("corruption off reproduces the prototype plus noise") {
    SyntheticSpec spec = small_spec();
    spec.sigma_bg = 0.0;
    spec.occlusion_prob = 0.0;
    spec.shift_max = 0;
    spec.sigma_proto = 0.05;
    const auto data = generate(spec);
    // All samples of a class should be near-identical up to the proto noise.
    const auto& a = data.images[0].grid;
    const auto& b = data.images[1].grid;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) < 6 * 0.05 * 2);
    for (ImageId id : data.medium.queries) CHECK(data.corruption.at(id) == 0.0);
}

TEST_CASE("determinism and label balance") {
    const auto spec = small_spec();
    const auto a = generate(spec);
    const auto b = generate(spec);
    REQUIRE(a.images.size() == b.images.size());
    CHECK(a.images.size() == spec.n_classes * spec.samples_per_class);
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i].id == b.images[i].id);
        CHECK(a.images[i].grid.values == b.images[i].grid.values);
    }
    std::map<ClassId, std::size_t> counts;
    for (const auto& img : a.images) ++counts[img.label];
    for (const auto& [cls, n] : counts) CHECK(n == spec.samples_per_class);

    SyntheticSpec other = spec;
    other.seed = 43;
    const auto c = generate(other);
    CHECK(a.images[0].grid.values != c.images[0].grid.values);
}

TEST_CASE("hard fraction zero makes the splits identical") {
    SyntheticSpec spec = small_spec();
    spec.hard_fraction = 0.0;
    const auto data = generate(spec);
    CHECK(data.medium.queries == data.hard.queries);
    CHECK(data.medium.positives == data.hard.positives);
}

TEST_CASE("hard queries carry more corruption on average") {
    SyntheticSpec spec = small_spec();
    spec.hard_fraction = 0.4;
    spec.occlusion_prob = 1.0;
    const auto data = generate(spec);
    const std::set<ImageId> hard(data.hard.queries.begin(), data.hard.queries.end());
    REQUIRE(!hard.empty());
    REQUIRE(hard.size() < data.medium.queries.size());
    double hard_sum = 0.0, medium_sum = 0.0;
    std::size_t hard_n = 0, medium_n = 0;
    for (ImageId q : data.medium.queries) {
        if (hard.count(q)) {
            hard_sum += data.corruption.at(q);
            ++hard_n;
        } else {
            medium_sum += data.corruption.at(q);
            ++medium_n;
        }
    }
    CHECK(hard_sum / hard_n > medium_sum / medium_n);
}

TEST_CASE("benchmark structure: queries held out, positives same-class") {
    const auto spec = small_spec();
    const auto data = generate(spec);
    const auto labels = data.labels();
    const std::set<ImageId> db(data.medium.database.begin(), data.medium.database.end());
    for (ImageId q : data.medium.queries) {
        CHECK(!db.count(q));
        for (ImageId p : data.medium.positives.at(q)) {
            CHECK(db.count(p));
            CHECK(labels.at(p) == labels.at(q));
        }
    }
}

TEST_CASE("default task is learnable by nearest centroid") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        SyntheticSpec spec;  // defaults: 50 classes x 40 samples
        spec.seed = seed;
        const auto data = generate(spec);
        const double acc = mean_pool_accuracy(data, spec);
        const double chance = 1.0 / static_cast<double>(spec.n_classes);
        CHECK(acc >= 5.0 * chance);
    }
}

TEST_CASE("spec validation") {
    SyntheticSpec bad = small_spec();
    bad.occlusion_prob = 1.5;
    CHECK_THROWS_AS(generate(bad), SpecError);
    bad = small_spec();
    bad.queries_per_class = bad.samples_per_class;
    CHECK_THROWS_AS(generate(bad), SpecError);
}

TEST_CASE("dataset and benchmark files round-trip") {
    namespace fs = std::filesystem;
    const auto spec = small_spec();
    const auto data = generate(spec);
    const auto dir = fs::temp_directory_path() / "cfcd_data_test";
    fs::create_directories(dir);
    save_dataset(data, (dir / "d.jsonl").string());
    const auto images = load_dataset((dir / "d.jsonl").string());
    REQUIRE(images.size() == data.images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        CHECK(images[i].id == data.images[i].id);
        CHECK(images[i].label == data.images[i].label);
        CHECK(images[i].grid == data.images[i].grid);
    }
    save_benchmark(data.hard, (dir / "b.json").string());
    const auto bench = load_benchmark((dir / "b.json").string());
    CHECK(bench.queries == data.hard.queries);
    CHECK(bench.database == data.hard.database);
    CHECK(bench.positives == data.hard.positives);
    CHECK(bench.split == "hard");
    fs::remove_all(dir);
}
