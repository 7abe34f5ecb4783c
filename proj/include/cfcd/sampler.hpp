#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cfcd/errors.hpp"

namespace cfcd {

using ImageId = std::int64_t;
using ClassId = std::int32_t;

// Frozen model predictions for every dataset image.
using PredictionTable = std::map<ImageId, ClassId>;

struct TripletTuple {
    ImageId anchor = 0;
    ImageId positive = 0;
    std::vector<ImageId> negatives;  // length Q
    ClassId anchor_class = 0;

    bool operator==(const TripletTuple&) const = default;
};

// One epoch of hard-negative triplets. Anchors are consumed without
// replacement, iterating classes in ascending id order round by round until
// every image has anchored exactly one tuple. Negatives are split evenly
// across the prediction pools; exhausted pools fall back to the union of the
// remaining different-class images.
std::vector<TripletTuple> build_epoch_triplets(const std::map<ImageId, ClassId>& labels,
                                               const PredictionTable& predictions,
                                               std::size_t q, std::uint64_t seed);

// Random-negative variant used by the no-hns ablation: positives uniform from
// the anchor's class, negatives uniform from all different-class images.
std::vector<TripletTuple> build_epoch_triplets_random(const std::map<ImageId, ClassId>& labels,
                                                      std::size_t q, std::uint64_t seed);

}  // namespace cfcd
