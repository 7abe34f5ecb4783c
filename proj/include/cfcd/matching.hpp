#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cfcd/numeric.hpp"

namespace cfcd {

struct GridPos {
    std::size_t row = 0;
    std::size_t col = 0;
    auto operator<=>(const GridPos&) const = default;
};

// Top-tau-percent grid positions ranked by descriptor l1 norm.
struct AttentionRegion {
    std::vector<GridPos> positions;  // descending l1 norm, ties by (row, col)
    double tau = 100.0;
};

struct MatchSet {
    std::vector<std::pair<GridPos, GridPos>> pairs;  // (anchor, positive)
};

AttentionRegion attention_select(const Grid3& grid, double tau);

// Argmin of Euclidean distance over (position, source-grid) candidates;
// ties broken by smallest (row, col).
GridPos nearest_neighbor(std::span<const double> f, const Grid3& source,
                         std::span<const GridPos> candidates);

// Reciprocal nearest neighbors restricted to the tau-percent attention
// regions of both grids.
MatchSet match_pairs(const Grid3& anchor, const Grid3& positive, double tau);

struct TripletLossResult {
    double loss = 0.0;
    Grid3 grad_anchor;
    Grid3 grad_positive;
    std::vector<Grid3> grad_negatives;
};

// Hinge triplet loss over matched descriptor pairs; each anchor descriptor is
// compared against its nearest neighbor in every full negative grid. NN
// choices are held fixed during differentiation.
TripletLossResult local_triplet_loss(const MatchSet& matches, const Grid3& anchor,
                                     const Grid3& positive,
                                     std::span<const Grid3> negatives, double mu);

}  // namespace cfcd
