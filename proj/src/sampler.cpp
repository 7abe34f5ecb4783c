#include "cfcd/sampler.hpp"

#include <algorithm>
#include <random>
#include <unordered_set>

namespace cfcd {

namespace {

using Rng = std::mt19937_64;

std::size_t draw_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

ImageId take_uniform(Rng& rng, std::vector<ImageId>& pool) {
    const std::size_t i = draw_index(rng, pool.size());
    const ImageId id = pool[i];
    pool[i] = pool.back();
    pool.pop_back();
    return id;
}

// Draws up to `want` ids uniformly without replacement from `pool`, skipping
// anything already in `used`. Returns how many were actually drawn.
std::size_t draw_from_pool(Rng& rng, const std::vector<ImageId>& pool,
                           std::unordered_set<ImageId>& used, std::size_t want,
                           std::vector<ImageId>& out) {
    std::vector<ImageId> avail;
    avail.reserve(pool.size());
    for (ImageId id : pool)
        if (!used.count(id)) avail.push_back(id);
    std::size_t got = 0;
    while (got < want && !avail.empty()) {
        const ImageId id = take_uniform(rng, avail);
        used.insert(id);
        out.push_back(id);
        ++got;
    }
    return got;
}

std::map<ClassId, std::vector<ImageId>> group_by_class(
    const std::map<ImageId, ClassId>& labels) {
    std::map<ClassId, std::vector<ImageId>> by_class;
    for (const auto& [id, cls] : labels) by_class[cls].push_back(id);
    for (const auto& [cls, members] : by_class)
        if (members.size() < 2) throw InsufficientClass{cls};
    return by_class;
}

// Splits q slots as evenly as possible over n_pools; the remainder goes to
// distinct pools chosen uniformly at random.
std::vector<std::size_t> even_allocation(Rng& rng, std::size_t q, std::size_t n_pools) {
    std::vector<std::size_t> counts(n_pools, q / n_pools);
    std::size_t rem = q % n_pools;
    std::vector<std::size_t> order(n_pools);
    for (std::size_t i = 0; i < n_pools; ++i) order[i] = i;
    for (std::size_t i = 0; i < rem; ++i) {
        const std::size_t j = i + draw_index(rng, n_pools - i);
        std::swap(order[i], order[j]);
        ++counts[order[i]];
    }
    return counts;
}

std::vector<ImageId> draw_negatives(Rng& rng, const std::vector<std::vector<ImageId>>& pools,
                                    std::size_t q) {
    std::vector<ImageId> negatives;
    std::unordered_set<ImageId> used;
    const auto counts = even_allocation(rng, q, pools.size());
    std::size_t deficit = 0;
    for (std::size_t i = 0; i < pools.size(); ++i)
        deficit += counts[i] - draw_from_pool(rng, pools[i], used, counts[i], negatives);
    if (deficit > 0) {
        std::vector<ImageId> everything;
        for (const auto& pool : pools)
            for (ImageId id : pool) everything.push_back(id);
        std::sort(everything.begin(), everything.end());
        everything.erase(std::unique(everything.begin(), everything.end()), everything.end());
        draw_from_pool(rng, everything, used, deficit, negatives);
    }
    return negatives;
}

}  // namespace

std::vector<TripletTuple> build_epoch_triplets(const std::map<ImageId, ClassId>& labels,
                                               const PredictionTable& predictions,
                                               std::size_t q, std::uint64_t seed) {
    if (q < 1) throw ConfigError("Q must be >= 1");
    auto by_class = group_by_class(labels);
    if (by_class.size() < 2) throw ConfigError("need at least 2 classes");
    for (const auto& [id, cls] : labels)
        if (!predictions.count(id)) throw ConfigError("missing prediction for an image");

    Rng rng(seed);
    std::vector<TripletTuple> tuples;
    std::map<ClassId, std::vector<ImageId>> remaining_anchors = by_class;

    bool any_left = true;
    while (any_left) {
        any_left = false;
        for (const auto& [cls, members] : by_class) {
            auto& anchors = remaining_anchors[cls];
            if (anchors.empty()) continue;
            const ImageId anchor = take_uniform(rng, anchors);
            if (!anchors.empty()) any_left = true;

            TripletTuple tuple;
            tuple.anchor = anchor;
            tuple.anchor_class = cls;

            const ClassId predicted = predictions.at(anchor);
            const bool correct = predicted == cls;

            std::vector<ImageId> positive_pool;
            for (ImageId id : members)
                if (id != anchor && (correct || predictions.at(id) == cls))
                    positive_pool.push_back(id);
            if (positive_pool.empty())
                for (ImageId id : members)
                    if (id != anchor) positive_pool.push_back(id);
            tuple.positive = positive_pool[draw_index(rng, positive_pool.size())];

            std::vector<std::vector<ImageId>> pools;
            if (correct) {
                pools.assign(2, {});
                for (const auto& [other_cls, other_members] : by_class) {
                    if (other_cls == cls) continue;
                    for (ImageId id : other_members)
                        pools[predictions.at(id) == cls ? 0 : 1].push_back(id);
                }
            } else {
                pools.assign(3, {});
                for (const auto& [other_cls, other_members] : by_class) {
                    if (other_cls == cls) continue;
                    for (ImageId id : other_members) {
                        const ClassId p = predictions.at(id);
                        pools[p == cls ? 0 : (p == predicted ? 1 : 2)].push_back(id);
                    }
                }
            }
            tuple.negatives = draw_negatives(rng, pools, q);
            tuples.push_back(std::move(tuple));
        }
        if (!any_left)
            for (const auto& [cls, anchors] : remaining_anchors)
                if (!anchors.empty()) any_left = true;
    }
    return tuples;
}

std::vector<TripletTuple> build_epoch_triplets_random(const std::map<ImageId, ClassId>& labels,
                                                      std::size_t q, std::uint64_t seed) {
    if (q < 1) throw ConfigError("Q must be >= 1");
    auto by_class = group_by_class(labels);
    if (by_class.size() < 2) throw ConfigError("need at least 2 classes");

    Rng rng(seed);
    std::vector<TripletTuple> tuples;
    std::map<ClassId, std::vector<ImageId>> remaining_anchors = by_class;

    bool any_left = true;
    while (any_left) {
        any_left = false;
        for (const auto& [cls, members] : by_class) {
            auto& anchors = remaining_anchors[cls];
            if (anchors.empty()) continue;
            const ImageId anchor = take_uniform(rng, anchors);

            TripletTuple tuple;
            tuple.anchor = anchor;
            tuple.anchor_class = cls;
            std::vector<ImageId> positive_pool;
            for (ImageId id : members)
                if (id != anchor) positive_pool.push_back(id);
            tuple.positive = positive_pool[draw_index(rng, positive_pool.size())];

            std::vector<std::vector<ImageId>> pools(1);
            for (const auto& [other_cls, other_members] : by_class)
                if (other_cls != cls)
                    for (ImageId id : other_members) pools[0].push_back(id);
            tuple.negatives = draw_negatives(rng, pools, q);
            tuples.push_back(std::move(tuple));
        }
        for (const auto& [cls, anchors] : remaining_anchors)
            if (!anchors.empty()) any_left = true;
    }
    return tuples;
}

}  // namespace cfcd
