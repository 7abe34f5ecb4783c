#include "cfcd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

namespace cfcd {

namespace {

using Rng = std::mt19937_64;

void validate(const SyntheticSpec& spec) {
    if (spec.n_classes < 2) throw SpecError("need at least 2 classes");
    if (spec.samples_per_class < 2) throw SpecError("need at least 2 samples per class");
    if (spec.d_in < 1 || spec.grid_w < 1 || spec.grid_h < 1) throw SpecError("dims must be >= 1");
    if (spec.occlusion_prob < 0.0 || spec.occlusion_prob > 1.0)
        throw SpecError("occlusion probability outside [0, 1]");
    if (spec.occlusion_max_fraction < 0.0 || spec.occlusion_max_fraction > 1.0)
        throw SpecError("occlusion fraction outside [0, 1]");
    if (spec.hard_fraction < 0.0 || spec.hard_fraction > 1.0)
        throw SpecError("hard fraction outside [0, 1]");
    if (spec.queries_per_class >= spec.samples_per_class)
        throw SpecError("queries per class must leave database samples");
}

Grid3 make_prototype(const SyntheticSpec& spec, Rng& rng) {
    Grid3 proto(spec.d_in, spec.grid_w, spec.grid_h);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : proto.values) v = dist(rng);
    return proto;
}

// One corrupted view of a class prototype: cyclic shift (viewpoint), a
// rectangular occluder filled with background noise, plus i.i.d. prototype
// noise. Hard samples draw from the upper half of the corruption ranges.
Grid3 corrupt(const SyntheticSpec& spec, const Grid3& proto, bool hard, Rng& rng,
              double& magnitude) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> proto_noise(0.0, spec.sigma_proto);
    std::normal_distribution<double> bg_noise(0.0, spec.sigma_bg);

    const std::size_t shift_lo = hard ? (spec.shift_max + 1) / 2 : 0;
    std::uniform_int_distribution<std::size_t> shift_dist(shift_lo, spec.shift_max);
    const std::size_t dr = shift_dist(rng);
    const std::size_t dc = shift_dist(rng);

    Grid3 out(spec.d_in, spec.grid_w, spec.grid_h);
    for (std::size_t c = 0; c < spec.d_in; ++c)
        for (std::size_t r = 0; r < spec.grid_h; ++r)
            for (std::size_t col = 0; col < spec.grid_w; ++col)
                out.at(c, r, col) = proto.at(c, (r + dr) % spec.grid_h, (col + dc) % spec.grid_w) +
                                    proto_noise(rng);

    magnitude = static_cast<double>(dr + dc);
    if (unit(rng) < spec.occlusion_prob && spec.occlusion_max_fraction > 0.0) {
        const double lo = hard ? spec.occlusion_max_fraction / 2.0 : 0.0;
        const double frac = lo + unit(rng) * (spec.occlusion_max_fraction - lo);
        const auto rw = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::round(std::sqrt(frac) * spec.grid_w)));
        const auto rh = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::round(std::sqrt(frac) * spec.grid_h)));
        std::uniform_int_distribution<std::size_t> row0(0, spec.grid_h - rh);
        std::uniform_int_distribution<std::size_t> col0(0, spec.grid_w - rw);
        const std::size_t r0 = row0(rng);
        const std::size_t c0 = col0(rng);
        for (std::size_t c = 0; c < spec.d_in; ++c)
            for (std::size_t r = r0; r < r0 + rh; ++r)
                for (std::size_t col = c0; col < c0 + rw; ++col)
                    out.at(c, r, col) = bg_noise(rng);
        magnitude += static_cast<double>(rw * rh);
    }
    return out;
}

}  // namespace

std::map<ImageId, ClassId> Dataset::labels() const {
    std::map<ImageId, ClassId> out;
    for (const auto& img : images) out[img.id] = img.label;
    return out;
}

const ImageRecord& Dataset::by_id(ImageId id) const {
    for (const auto& img : images)
        if (img.id == id) return img;
    throw Error("unknown image id " + std::to_string(id));
}

Dataset generate(const SyntheticSpec& spec) {
    validate(spec);
    Rng proto_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Grid3> prototypes;
    prototypes.reserve(spec.n_classes);
    for (std::size_t c = 0; c < spec.n_classes; ++c)
        prototypes.push_back(make_prototype(spec, proto_rng));

    const std::size_t db_per_class = spec.samples_per_class - spec.queries_per_class;
    const auto hard_per_class = static_cast<std::size_t>(
        std::round(spec.hard_fraction * static_cast<double>(spec.queries_per_class)));

    Dataset data;
    std::vector<ImageId> hard_queries;
    ImageId next_id = 0;
    for (std::size_t cls = 0; cls < spec.n_classes; ++cls) {
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            const bool is_query = i >= db_per_class;
            const bool is_hard =
                is_query && (i >= spec.samples_per_class - hard_per_class);
            Rng rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(next_id));
            double magnitude = 0.0;
            ImageRecord rec;
            rec.id = next_id;
            rec.label = static_cast<ClassId>(cls);
            rec.grid = corrupt(spec, prototypes[cls], is_hard, rng, magnitude);
            data.corruption[rec.id] = magnitude;
            data.images.push_back(std::move(rec));
            if (is_query) {
                data.medium.queries.push_back(next_id);
                if (is_hard) hard_queries.push_back(next_id);
            } else {
                data.medium.database.push_back(next_id);
            }
            ++next_id;
        }
    }

    const auto labels = data.labels();
    for (ImageId q : data.medium.queries) {
        std::vector<ImageId> pos;
        for (ImageId d : data.medium.database)
            if (labels.at(d) == labels.at(q)) pos.push_back(d);
        data.medium.positives[q] = std::move(pos);
    }
    data.medium.split = "medium";

    data.hard = data.medium;
    data.hard.split = "hard";
    if (!hard_queries.empty()) {
        data.hard.queries = hard_queries;
        data.hard.positives.clear();
        for (ImageId q : hard_queries) data.hard.positives[q] = data.medium.positives.at(q);
    }
    return data;
}

SyntheticSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open spec file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError("bad spec json: " + std::string(e.what()));
    }
    SyntheticSpec spec;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_classes", spec.n_classes);
    get("samples_per_class", spec.samples_per_class);
    get("d_in", spec.d_in);
    get("grid_w", spec.grid_w);
    get("grid_h", spec.grid_h);
    get("sigma_proto", spec.sigma_proto);
    get("sigma_bg", spec.sigma_bg);
    get("occlusion_prob", spec.occlusion_prob);
    get("occlusion_max_fraction", spec.occlusion_max_fraction);
    get("shift_max", spec.shift_max);
    get("hard_fraction", spec.hard_fraction);
    get("queries_per_class", spec.queries_per_class);
    get("seed", spec.seed);
    return spec;
}

void save_spec(const SyntheticSpec& spec, const std::string& path) {
    nlohmann::json j;
    j["n_classes"] = spec.n_classes;
    j["samples_per_class"] = spec.samples_per_class;
    j["d_in"] = spec.d_in;
    j["grid_w"] = spec.grid_w;
    j["grid_h"] = spec.grid_h;
    j["sigma_proto"] = spec.sigma_proto;
    j["sigma_bg"] = spec.sigma_bg;
    j["occlusion_prob"] = spec.occlusion_prob;
    j["occlusion_max_fraction"] = spec.occlusion_max_fraction;
    j["shift_max"] = spec.shift_max;
    j["hard_fraction"] = spec.hard_fraction;
    j["queries_per_class"] = spec.queries_per_class;
    j["seed"] = spec.seed;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw SpecError("cannot open spec file for writing: " + path);
    out << j.dump(2) << "\n";
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open dataset file for writing: " + path);
    for (const auto& img : data.images) {
        nlohmann::json rec;
        rec["id"] = img.id;
        rec["label"] = img.label;
        rec["dims"] = {img.grid.channels, img.grid.width, img.grid.height};
        rec["values"] = img.grid.values;
        out << rec.dump() << "\n";
    }
}

std::vector<ImageRecord> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file: " + path);
    std::vector<ImageRecord> images;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        ImageRecord img;
        img.id = rec.at("id").get<ImageId>();
        img.label = rec.at("label").get<ClassId>();
        const auto dims = rec.at("dims");
        img.grid = Grid3(dims.at(0).get<std::size_t>(), dims.at(1).get<std::size_t>(),
                         dims.at(2).get<std::size_t>());
        img.grid.values = rec.at("values").get<std::vector<double>>();
        if (img.grid.values.size() != img.grid.channels * img.grid.spatial_size())
            throw Error("dataset record has inconsistent dims");
        images.push_back(std::move(img));
    }
    return images;
}

void save_benchmark(const Benchmark& bench, const std::string& path) {
    nlohmann::json j;
    j["queries"] = bench.queries;
    j["database"] = bench.database;
    j["split"] = bench.split;
    nlohmann::json pos = nlohmann::json::object();
    for (const auto& [q, ids] : bench.positives) pos[std::to_string(q)] = ids;
    j["positives"] = pos;
    nlohmann::json junk = nlohmann::json::object();
    for (const auto& [q, ids] : bench.junk) junk[std::to_string(q)] = ids;
    j["junk"] = junk;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open benchmark file for writing: " + path);
    out << j.dump(2) << "\n";
}

Benchmark load_benchmark(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open benchmark file: " + path);
    nlohmann::json j;
    in >> j;
    Benchmark bench;
    bench.queries = j.at("queries").get<std::vector<ImageId>>();
    bench.database = j.at("database").get<std::vector<ImageId>>();
    bench.split = j.at("split").get<std::string>();
    for (const auto& [key, ids] : j.at("positives").items())
        bench.positives[std::stoll(key)] = ids.get<std::vector<ImageId>>();
    for (const auto& [key, ids] : j.at("junk").items())
        bench.junk[std::stoll(key)] = ids.get<std::vector<ImageId>>();
    return bench;
}

}  // namespace cfcd
