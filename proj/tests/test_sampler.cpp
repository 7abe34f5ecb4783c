#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "cfcd/sampler.hpp"

using namespace cfcd;

namespace {

// 10 classes x 20 samples, ids are class * 100 + i.
std::map<ImageId, ClassId> fixture_labels(int n_classes = 10, int per_class = 20) {
    std::map<ImageId, ClassId> labels;
    for (int c = 0; c < n_classes; ++c)
        for (int i = 0; i < per_class; ++i) labels[c * 100 + i] = c;
    return labels;
}

PredictionTable correct_predictions(const std::map<ImageId, ClassId>& labels) {
    PredictionTable preds;
    for (const auto& [id, cls] : labels) preds[id] = cls;
    return preds;
}

void check_ground_truth(const std::vector<TripletTuple>& tuples,
                        const std::map<ImageId, ClassId>& labels) {
    for (const auto& t : tuples) {
        CHECK(labels.at(t.anchor) == t.anchor_class);
        CHECK(labels.at(t.positive) == t.anchor_class);
        CHECK(t.anchor != t.positive);
        std::set<ImageId> seen;
        for (ImageId n : t.negatives) {
            CHECK(labels.at(n) != t.anchor_class);
            CHECK(seen.insert(n).second);  // no duplicate negatives in a tuple
        }
    }
}

}  // namespace

TEST_CASE("all-correct predictions give normal negatives only") {
    std::map<ImageId, ClassId> labels;
    labels[0] = 0;
    labels[1] = 0;
    labels[10] = 1;
    labels[11] = 1;
    const auto preds = correct_predictions(labels);
    const auto tuples = build_epoch_triplets(labels, preds, 1, 42);
    CHECK(tuples.size() == 4);
    check_ground_truth(tuples, labels);
    for (const auto& t : tuples)
        for (ImageId n : t.negatives) CHECK(preds.at(n) != t.anchor_class);
}

TEST_CASE("insufficient class raises") {
    std::map<ImageId, ClassId> labels;
    labels[0] = 0;
    labels[1] = 0;
    labels[10] = 1;
    CHECK_THROWS_AS(build_epoch_triplets(labels, correct_predictions(labels), 1, 0),
                    InsufficientClass);
}

TEST_CASE("determinism and anchor coverage") {
    const auto labels = fixture_labels(4, 5);
    auto preds = correct_predictions(labels);
    preds[100] = 2;  // one misclassified image
    const auto a = build_epoch_triplets(labels, preds, 3, 7);
    const auto b = build_epoch_triplets(labels, preds, 3, 7);
    CHECK(a == b);
    const auto c = build_epoch_triplets(labels, preds, 3, 8);
    CHECK(a != c);

    // Every image anchors exactly once.
    std::multiset<ImageId> anchors;
    for (const auto& t : a) anchors.insert(t.anchor);
    CHECK(anchors.size() == labels.size());
    for (const auto& [id, cls] : labels) CHECK(anchors.count(id) == 1);

    // Each round visits classes in ascending id order.
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
        if (i % 4 != 3) CHECK(a[i].anchor_class < a[i + 1].anchor_class);
    }
}

TEST_CASE("misclassified anchor draws a correctly-predicted positive") {
    auto labels = fixture_labels(3, 4);
    auto preds = correct_predictions(labels);
    preds[0] = 1;  // anchor 0 misclassified as class 1
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto tuples = build_epoch_triplets(labels, preds, 2, seed);
        check_ground_truth(tuples, labels);
        for (const auto& t : tuples) {
            if (t.anchor != 0) continue;
            CHECK(preds.at(t.positive) == t.anchor_class);
        }
    }
}

TEST_CASE("misclassified anchor with Q=6 splits negatives 2/2/2") {
    auto labels = fixture_labels(4, 6);
    auto preds = correct_predictions(labels);
    preds[0] = 1;    // anchor of class 0 predicted as class 1
    preds[100] = 0;  // class-1 images predicted as class 0 (hard pool)
    preds[101] = 0;
    preds[200] = 1;  // a class-2 image predicted as class 1 (P(x_a) pool)
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto tuples = build_epoch_triplets(labels, preds, 6, seed);
        for (const auto& t : tuples) {
            if (t.anchor != 0) continue;
            int pool_c = 0, pool_pa = 0, pool_rest = 0;
            for (ImageId n : t.negatives) {
                const ClassId p = preds.at(n);
                if (p == 0) ++pool_c;
                else if (p == 1) ++pool_pa;
                else ++pool_rest;
            }
            CHECK(pool_c == 2);
            CHECK(pool_pa == 2);
            CHECK(pool_rest == 2);
        }
    }
}

TEST_CASE("even split frequency of a lone hard negative") {
    // Exactly one image of class 1 is predicted as class 0. Tuples anchored
    // at correctly-predicted class-0 images should pick it for about half of
    // their negative slots (Q = 1: the single slot lands in the hard pool
    // with probability 1/2 and the hard pool has one element).
    auto labels = fixture_labels(2, 10);
    auto preds = correct_predictions(labels);
    preds[100] = 0;
    std::size_t hard_hits = 0;
    std::size_t anchor_tuples = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto tuples = build_epoch_triplets(labels, preds, 1, seed);
        for (const auto& t : tuples) {
            if (t.anchor_class != 0) continue;
            ++anchor_tuples;
            if (t.negatives[0] == 100) ++hard_hits;
        }
    }
    const double freq = static_cast<double>(hard_hits) / static_cast<double>(anchor_tuples);
    CHECK(freq > 0.45);
    CHECK(freq < 0.55);
}

TEST_CASE("pool exhaustion falls back instead of failing") {
    // Class 1 has only 2 images and Q exceeds every pool size.
    std::map<ImageId, ClassId> labels;
    for (int i = 0; i < 8; ++i) labels[i] = 0;
    labels[100] = 1;
    labels[101] = 1;
    auto preds = correct_predictions(labels);
    preds[100] = 0;
    const auto tuples = build_epoch_triplets(labels, preds, 2, 5);
    check_ground_truth(tuples, labels);
    for (const auto& t : tuples) {
        if (t.anchor_class != 0) continue;
        CHECK(t.negatives.size() == 2);  // both class-1 images despite uneven pools
    }
}

TEST_CASE("random sampler variant keeps ground-truth constraints") {
    const auto labels = fixture_labels(3, 5);
    const auto a = build_epoch_triplets_random(labels, 4, 11);
    const auto b = build_epoch_triplets_random(labels, 4, 11);
    CHECK(a == b);
    CHECK(a.size() == labels.size());
    check_ground_truth(a, labels);
}
