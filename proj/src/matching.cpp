#include "cfcd/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cfcd {

namespace {

double l1_norm_at(const Grid3& grid, std::size_t pos) {
    double s = 0.0;
    for (std::size_t c = 0; c < grid.channels; ++c) s += std::abs(grid.at_flat(c, pos));
    return s;
}

double sq_dist(const Grid3& grid, std::size_t pos, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t c = 0; c < grid.channels; ++c) {
        const double d = grid.at_flat(c, pos) - f[c];
        s += d * d;
    }
    return s;
}

}  // namespace

AttentionRegion attention_select(const Grid3& grid, double tau) {
    if (!(tau > 0.0) || tau > 100.0) throw InvalidTau{};
    const std::size_t z = grid.spatial_size();
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(tau * static_cast<double>(z) / 100.0)));

    std::vector<std::pair<double, GridPos>> ranked;
    ranked.reserve(z);
    for (std::size_t r = 0; r < grid.height; ++r)
        for (std::size_t c = 0; c < grid.width; ++c)
            ranked.emplace_back(l1_norm_at(grid, grid.pos_index(r, c)), GridPos{r, c});
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    AttentionRegion region;
    region.tau = tau;
    region.positions.reserve(keep);
    for (std::size_t i = 0; i < keep && i < ranked.size(); ++i)
        region.positions.push_back(ranked[i].second);
    return region;
}

GridPos nearest_neighbor(std::span<const double> f, const Grid3& source,
                         std::span<const GridPos> candidates) {
    if (candidates.empty()) throw EmptyCandidates{};
    GridPos best{};
    double best_d = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const GridPos& p : candidates) {
        const double d = sq_dist(source, source.pos_index(p.row, p.col), f);
        if (!found || d < best_d || (d == best_d && p < best)) {
            best = p;
            best_d = d;
            found = true;
        }
    }
    return best;
}

MatchSet match_pairs(const Grid3& anchor, const Grid3& positive, double tau) {
    if (anchor.channels != positive.channels)
        throw ShapeMismatch("grids disagree on channel count");
    const auto region_a = attention_select(anchor, tau);
    const auto region_p = attention_select(positive, tau);

    MatchSet out;
    for (const GridPos& a : region_a.positions) {
        const auto fa = anchor.descriptor(a.row, a.col);
        const GridPos p = nearest_neighbor(fa, positive, region_p.positions);
        const auto fp = positive.descriptor(p.row, p.col);
        if (nearest_neighbor(fp, anchor, region_a.positions) == a)
            out.pairs.emplace_back(a, p);
    }
    return out;
}

TripletLossResult local_triplet_loss(const MatchSet& matches, const Grid3& anchor,
                                     const Grid3& positive,
                                     std::span<const Grid3> negatives, double mu) {
    TripletLossResult out;
    out.grad_anchor = Grid3(anchor.channels, anchor.width, anchor.height);
    out.grad_positive = Grid3(positive.channels, positive.width, positive.height);
    out.grad_negatives.reserve(negatives.size());
    for (const Grid3& n : negatives) out.grad_negatives.emplace_back(n.channels, n.width, n.height);

    std::vector<GridPos> full;
    for (const auto& [a, p] : matches.pairs) {
        const std::size_t ia = anchor.pos_index(a.row, a.col);
        const std::size_t ip = positive.pos_index(p.row, p.col);
        const auto fa = anchor.descriptor(a.row, a.col);
        double d_ap = 0.0;
        for (std::size_t c = 0; c < anchor.channels; ++c) {
            const double d = fa[c] - positive.at_flat(c, ip);
            d_ap += d * d;
        }
        for (std::size_t j = 0; j < negatives.size(); ++j) {
            const Grid3& neg = negatives[j];
            full.clear();
            for (std::size_t r = 0; r < neg.height; ++r)
                for (std::size_t c = 0; c < neg.width; ++c) full.push_back({r, c});
            const GridPos vn = nearest_neighbor(fa, neg, full);
            const std::size_t in = neg.pos_index(vn.row, vn.col);
            double d_an = 0.0;
            for (std::size_t c = 0; c < neg.channels; ++c) {
                const double d = fa[c] - neg.at_flat(c, in);
                d_an += d * d;
            }
            const double hinge = d_ap - d_an + mu;
            if (hinge <= 0.0) continue;
            out.loss += hinge;
            for (std::size_t c = 0; c < anchor.channels; ++c) {
                const double ap = fa[c] - positive.at_flat(c, ip);
                const double an = fa[c] - neg.at_flat(c, in);
                out.grad_anchor.at_flat(c, ia) += 2.0 * ap - 2.0 * an;
                out.grad_positive.at_flat(c, ip) += -2.0 * ap;
                out.grad_negatives[j].at_flat(c, in) += 2.0 * an;
            }
        }
    }
    return out;
}

}  // namespace cfcd
