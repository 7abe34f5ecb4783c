#pragma once

#include <stdexcept>
#include <string>

namespace cfcd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroVector : Error {
    ZeroVector() : Error("vector norm below 1e-12") {}
};
struct InvalidP : Error {
    InvalidP() : Error("GeM exponent p must be >= 1") {}
};
struct InvalidLabel : Error {
    InvalidLabel() : Error("label out of range") {}
};
struct DegenerateMedian : Error {
    DegenerateMedian() : Error("median target logit too close to 1, scale diverges") {}
};
struct InvalidTau : Error {
    InvalidTau() : Error("tau must lie in (0, 100]") {}
};
struct EmptyCandidates : Error {
    EmptyCandidates() : Error("nearest neighbor search over empty candidate set") {}
};
struct InsufficientClass : Error {
    explicit InsufficientClass(int cls)
        : Error("class " + std::to_string(cls) + " has fewer than 2 images") {}
};
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what) {}
};
struct StaleRecord : Error {
    StaleRecord() : Error("forward record does not match current model version") {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};
struct SpecError : Error {
    explicit SpecError(const std::string& what) : Error("dataset spec error: " + what) {}
};
struct EmptyBenchmark : Error {
    EmptyBenchmark() : Error("no query has positives") {}
};
struct NonFinite : Error {
    NonFinite() : Error("function evaluated to a non-finite value") {}
};

}  // namespace cfcd
