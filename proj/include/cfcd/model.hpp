#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfcd/numeric.hpp"

namespace cfcd {

// Position-wise linear encoder + rectifier, GeM pooling, whitening FC and a
// cosine classifier head.
struct ToyModel {
    Matrix encoder;     // d_c x d_in
    Matrix whitening;   // d_g x d_c
    std::vector<double> whitening_bias;  // d_g
    Matrix classifier;  // n_classes x d_g, rows l2-normalized at evaluation
    double gem_p = 3.0;
    std::uint64_t version = 0;

    std::size_t input_dim() const { return encoder.cols; }
    std::size_t local_dim() const { return encoder.rows; }
    std::size_t global_dim() const { return whitening.rows; }
    std::size_t n_classes() const { return classifier.rows; }

    void bump_version() { ++version; }
};

ToyModel make_model(std::size_t d_in, std::size_t d_c, std::size_t d_g,
                    std::size_t n_classes, std::uint64_t seed);

struct ForwardRecord {
    Grid3 local;                     // F^l, d_c x d_w x d_h (post-rectifier)
    std::vector<double> pooled;      // GeM output, length d_c
    std::vector<double> pre_norm;    // whitening output before normalization
    std::vector<double> global;      // F^g, unit norm
    std::vector<double> logits;      // cosine logits, length n_classes
    const Grid3* input = nullptr;    // borrowed for backward
    std::uint64_t model_version = 0;
};

ForwardRecord forward(const ToyModel& model, const Grid3& input);

struct ModelGrads {
    Matrix encoder;
    Matrix whitening;
    std::vector<double> whitening_bias;
    Matrix classifier;

    void accumulate(const ModelGrads& other);
    void scale(double a);
};

ModelGrads zero_grads(const ToyModel& model);

// Upstream gradients entering the pipeline: classification through the
// logits, triplet matching through F^l, and optionally through the pooled
// vector (no-matching ablation).
struct Upstream {
    std::vector<double> d_logits;   // may be empty
    Grid3 d_local;                  // may be empty
    std::vector<double> d_pooled;   // may be empty
};

ModelGrads backward(const ToyModel& model, const ForwardRecord& record, const Upstream& up);

// Flat binary checkpoint: magic "CFCD", u32 format version, then per tensor
// (u32 name length, name, u32 rank, u64 dims, f64 little-endian values).
void save_checkpoint(const ToyModel& model, const std::string& path);
ToyModel load_checkpoint(const std::string& path);
std::vector<std::uint8_t> serialize_checkpoint(const ToyModel& model);

}  // namespace cfcd
