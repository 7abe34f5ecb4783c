#include "cfcd/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace cfcd {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

void fill_uniform(Matrix& m, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& v : m.values) v = dist(rng);
}

}  // namespace

ToyModel make_model(std::size_t d_in, std::size_t d_c, std::size_t d_g,
                    std::size_t n_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ToyModel model;
    model.encoder = Matrix(d_c, d_in);
    model.whitening = Matrix(d_g, d_c);
    model.whitening_bias.assign(d_g, 0.0);
    model.classifier = Matrix(n_classes, d_g);
    fill_uniform(model.encoder, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
    fill_uniform(model.whitening, rng, 1.0 / std::sqrt(static_cast<double>(d_c)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : model.classifier.values) v = gauss(rng);
    return model;
}

ForwardRecord forward(const ToyModel& model, const Grid3& input) {
    if (input.channels != model.input_dim())
        throw ShapeMismatch("input channels " + std::to_string(input.channels) +
                            " vs encoder dim " + std::to_string(model.input_dim()));
    if (input.spatial_size() < 1) throw ShapeMismatch("empty spatial plane");

    ForwardRecord rec;
    rec.input = &input;
    rec.model_version = model.version;

    const std::size_t z = input.spatial_size();
    const std::size_t d_c = model.local_dim();
    rec.local = Grid3(d_c, input.width, input.height);
    for (std::size_t i = 0; i < z; ++i) {
        for (std::size_t c = 0; c < d_c; ++c) {
            double pre = 0.0;
            for (std::size_t k = 0; k < input.channels; ++k)
                pre += model.encoder(c, k) * input.at_flat(k, i);
            rec.local.at_flat(c, i) = pre > 0.0 ? pre : 0.0;
        }
    }

    rec.pooled = gem_pool(rec.local, model.gem_p);

    const std::size_t d_g = model.global_dim();
    rec.pre_norm.assign(d_g, 0.0);
    for (std::size_t i = 0; i < d_g; ++i) {
        double acc = model.whitening_bias[i];
        for (std::size_t k = 0; k < d_c; ++k) acc += model.whitening(i, k) * rec.pooled[k];
        rec.pre_norm[i] = acc;
    }
    rec.global = l2_normalize(rec.pre_norm);

    rec.logits.assign(model.n_classes(), 0.0);
    for (std::size_t j = 0; j < model.n_classes(); ++j) {
        const auto wn = l2_normalize(model.classifier.row(j));
        double dot = 0.0;
        for (std::size_t k = 0; k < d_g; ++k) dot += rec.global[k] * wn[k];
        rec.logits[j] = dot;
    }
    return rec;
}

ModelGrads zero_grads(const ToyModel& model) {
    ModelGrads g;
    g.encoder = Matrix(model.encoder.rows, model.encoder.cols);
    g.whitening = Matrix(model.whitening.rows, model.whitening.cols);
    g.whitening_bias.assign(model.whitening_bias.size(), 0.0);
    g.classifier = Matrix(model.classifier.rows, model.classifier.cols);
    return g;
}

void ModelGrads::accumulate(const ModelGrads& other) {
    for (std::size_t i = 0; i < encoder.values.size(); ++i)
        encoder.values[i] += other.encoder.values[i];
    for (std::size_t i = 0; i < whitening.values.size(); ++i)
        whitening.values[i] += other.whitening.values[i];
    for (std::size_t i = 0; i < whitening_bias.size(); ++i)
        whitening_bias[i] += other.whitening_bias[i];
    for (std::size_t i = 0; i < classifier.values.size(); ++i)
        classifier.values[i] += other.classifier.values[i];
}

void ModelGrads::scale(double a) {
    for (double& v : encoder.values) v *= a;
    for (double& v : whitening.values) v *= a;
    for (double& v : whitening_bias) v *= a;
    for (double& v : classifier.values) v *= a;
}

ModelGrads backward(const ToyModel& model, const ForwardRecord& record, const Upstream& up) {
    if (record.model_version != model.version) throw StaleRecord{};
    const std::size_t d_g = model.global_dim();
    const std::size_t d_c = model.local_dim();
    const std::size_t z = record.local.spatial_size();

    ModelGrads grads = zero_grads(model);
    std::vector<double> d_global(d_g, 0.0);

    if (!up.d_logits.empty()) {
        for (std::size_t j = 0; j < model.n_classes(); ++j) {
            const double dl = up.d_logits[j];
            const double wn = norm2(model.classifier.row(j));
            const auto wu = l2_normalize(model.classifier.row(j));
            double dot = 0.0;
            for (std::size_t k = 0; k < d_g; ++k) dot += wu[k] * record.global[k];
            for (std::size_t k = 0; k < d_g; ++k) {
                d_global[k] += dl * wu[k];
                grads.classifier(j, k) += dl * (record.global[k] - dot * wu[k]) / wn;
            }
        }
    }

    // l2-normalization Jacobian: project out the F^g direction, divide by ||u||.
    const double un = norm2(record.pre_norm);
    std::vector<double> d_pre(d_g, 0.0);
    double gdot = 0.0;
    for (std::size_t k = 0; k < d_g; ++k) gdot += d_global[k] * record.global[k];
    for (std::size_t k = 0; k < d_g; ++k)
        d_pre[k] = (d_global[k] - gdot * record.global[k]) / un;

    std::vector<double> d_pooled(d_c, 0.0);
    for (std::size_t i = 0; i < d_g; ++i) {
        grads.whitening_bias[i] += d_pre[i];
        for (std::size_t k = 0; k < d_c; ++k) {
            grads.whitening(i, k) += d_pre[i] * record.pooled[k];
            d_pooled[k] += model.whitening(i, k) * d_pre[i];
        }
    }
    if (!up.d_pooled.empty())
        for (std::size_t k = 0; k < d_c; ++k) d_pooled[k] += up.d_pooled[k];

    // GeM backward: d g_c / d x_{c,i} = (1/Z) (x / g_c)^{p-1} on the clamped
    // values; clamped-away entries get zero.
    const double p = model.gem_p;
    Grid3 d_local(d_c, record.local.width, record.local.height);
    for (std::size_t c = 0; c < d_c; ++c) {
        const double g = record.pooled[c];
        for (std::size_t i = 0; i < z; ++i) {
            const double x = record.local.at_flat(c, i);
            if (x < kActivationFloor) continue;
            d_local.at_flat(c, i) =
                d_pooled[c] * std::pow(x / g, p - 1.0) / static_cast<double>(z);
        }
    }
    if (!up.d_local.values.empty())
        for (std::size_t i = 0; i < d_local.values.size(); ++i)
            d_local.values[i] += up.d_local.values[i];

    // Rectifier subgradient is 0 at 0.
    const Grid3& input = *record.input;
    for (std::size_t i = 0; i < z; ++i) {
        for (std::size_t c = 0; c < d_c; ++c) {
            if (!(record.local.at_flat(c, i) > 0.0)) continue;
            const double d = d_local.at_flat(c, i);
            if (d == 0.0) continue;
            for (std::size_t k = 0; k < input.channels; ++k)
                grads.encoder(c, k) += d * input.at_flat(k, i);
        }
    }
    return grads;
}

namespace {

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

void put_tensor(std::vector<std::uint8_t>& buf, const std::string& name,
                const std::vector<std::uint64_t>& dims, std::span<const double> values) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u32(buf, static_cast<std::uint32_t>(dims.size()));
    for (std::uint64_t d : dims) put_u64(buf, d);
    for (double v : values) put_f64(buf, v);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw Error("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(buf.begin() + static_cast<long>(pos), buf.begin() + static_cast<long>(pos + n));
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ToyModel& model) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kFormatVersion);
    put_tensor(buf, "encoder", {model.encoder.rows, model.encoder.cols}, model.encoder.values);
    put_tensor(buf, "whitening", {model.whitening.rows, model.whitening.cols},
               model.whitening.values);
    put_tensor(buf, "whitening_bias", {model.whitening_bias.size()}, model.whitening_bias);
    put_tensor(buf, "classifier", {model.classifier.rows, model.classifier.cols},
               model.classifier.values);
    const double gem_p = model.gem_p;
    put_tensor(buf, "gem_p", {1}, {&gem_p, 1});
    return buf;
}

void save_checkpoint(const ToyModel& model, const std::string& path) {
    const auto buf = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<long>(buf.size()));
}

ToyModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    Reader r{buf};
    if (r.str(4) != std::string(kMagic, 4)) throw Error("bad checkpoint magic");
    if (r.u32() != kFormatVersion) throw Error("unsupported checkpoint version");

    ToyModel model;
    while (r.pos < buf.size()) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        std::vector<std::uint64_t> dims(rank);
        std::size_t count = 1;
        for (auto& d : dims) {
            d = r.u64();
            count *= d;
        }
        std::vector<double> values(count);
        for (double& v : values) v = r.f64();
        if (name == "encoder") {
            model.encoder = Matrix(dims.at(0), dims.at(1));
            model.encoder.values = std::move(values);
        } else if (name == "whitening") {
            model.whitening = Matrix(dims.at(0), dims.at(1));
            model.whitening.values = std::move(values);
        } else if (name == "whitening_bias") {
            model.whitening_bias = std::move(values);
        } else if (name == "classifier") {
            model.classifier = Matrix(dims.at(0), dims.at(1));
            model.classifier.values = std::move(values);
        } else if (name == "gem_p") {
            model.gem_p = values.at(0);
        } else {
            throw Error("unknown tensor in checkpoint: " + name);
        }
    }
    return model;
}

}  // namespace cfcd
