#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfcd/numeric.hpp"
#include "cfcd/sampler.hpp"

namespace cfcd {

struct SyntheticSpec {
    std::size_t n_classes = 50;
    std::size_t samples_per_class = 40;
    std::size_t d_in = 16;
    std::size_t grid_w = 8;
    std::size_t grid_h = 8;
    double sigma_proto = 0.1;
    double sigma_bg = 0.3;
    double occlusion_prob = 0.5;
    double occlusion_max_fraction = 0.25;
    std::size_t shift_max = 2;
    double hard_fraction = 0.3;
    std::size_t queries_per_class = 8;
    std::uint64_t seed = 0;
};

struct ImageRecord {
    ImageId id = 0;
    ClassId label = 0;
    Grid3 grid;
};

// Retrieval protocol over a dataset split: junk ids are removed from a
// ranking before scoring.
struct Benchmark {
    std::vector<ImageId> queries;
    std::vector<ImageId> database;
    std::map<ImageId, std::vector<ImageId>> positives;
    std::map<ImageId, std::vector<ImageId>> junk;
    std::string split;
};

struct Dataset {
    std::vector<ImageRecord> images;
    Benchmark medium;
    Benchmark hard;
    // Generator bookkeeping: corruption magnitude per image (occluded cells
    // plus shift distance), used to verify the hard/medium separation.
    std::map<ImageId, double> corruption;

    std::map<ImageId, ClassId> labels() const;
    const ImageRecord& by_id(ImageId id) const;
};

Dataset generate(const SyntheticSpec& spec);

// JSON spec file; missing keys keep their defaults.
SyntheticSpec load_spec(const std::string& path);
void save_spec(const SyntheticSpec& spec, const std::string& path);

// JSON-lines dataset file: {id, label, dims [d_in, d_w, d_h], values}.
void save_dataset(const Dataset& data, const std::string& path);
std::vector<ImageRecord> load_dataset(const std::string& path);

void save_benchmark(const Benchmark& bench, const std::string& path);
Benchmark load_benchmark(const std::string& path);

}  // namespace cfcd
