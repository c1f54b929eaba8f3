#include "surge/layers.hpp"

#include "surge/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace surge::nn {

namespace {

constexpr double kInitStd = 0.02;

}  // namespace

Tensor& ParamStore::create(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng) {
    if (index_.contains(name)) {
        throw Error("duplicate parameter name: " + name);
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    switch (init) {
        case Init::Normal: {
            std::normal_distribution<double> dist(0.0, kInitStd);
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = dist(rng);
            }
            break;
        }
        case Init::Zeros:
            m.setZero();
            break;
        case Init::Ones:
            m.setOnes();
            break;
    }
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    tensors_.emplace_back(std::move(m), true);
    return tensors_.back();
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw Error("unknown parameter: " + name);
    }
    return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw Error("unknown parameter: " + name);
    }
    return tensors_[it->second];
}

std::vector<Tensor> ParamStore::with_prefix(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].starts_with(prefix)) {
            out.push_back(tensors_[i]);
        }
    }
    return out;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        n += t.size();
    }
    return n;
}

void ParamStore::zero_grad() {
    for (auto& t : tensors_) {
        t.zero_grad();
    }
}

std::vector<Matrix> ParamStore::snapshot() const {
    std::vector<Matrix> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) {
        out.push_back(t.value());
    }
    return out;
}

void ParamStore::restore(const std::vector<Matrix>& values) {
    if (values.size() != tensors_.size()) {
        throw Error("restore: snapshot size mismatch");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        tensors_[i].mutable_value() = values[i];
    }
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool with_bias, Init weight_init)
    : weight(store.create(name + ".weight", in, out, weight_init, rng)) {
    if (with_bias) {
        bias = store.create(name + ".bias", 1, out, Init::Zeros, rng);
    }
}

Tensor Linear::operator()(const Tensor& x) const {
    if (x.cols() != weight.rows()) {
        throw Error("linear: input width " + std::to_string(x.cols()) + " does not match " +
                    std::to_string(weight.rows()));
    }
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_row(y, bias) : y;
}

Mlp::Mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
         Rng& rng, Init output_init)
    : first(store, name + ".0", in, hidden, rng),
      second(store, name + ".1", hidden, out, rng, true, output_init) {}

Tensor Mlp::operator()(const Tensor& x) const { return second(relu(first(x))); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t width, Rng& rng)
    : gain(store.create(name + ".gain", 1, width, Init::Ones, rng)),
      bias(store.create(name + ".bias", 1, width, Init::Zeros, rng)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

namespace {

void write_f32_le(std::ostream& out, float f) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
    }
    out.write(bytes, 4);
}

float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    }
    return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.tsv", std::ios::binary);
    std::ofstream weights(dir / "weights.bin", std::ios::binary);
    if (!manifest || !weights) {
        throw Error("cannot write checkpoint to " + dir.string());
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Tensor& t = store.tensors()[i];
        manifest << store.names()[i] << '\t' << t.rows() << 'x' << t.cols() << "\tfloat32\n";
        const Matrix& v = t.value();
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            write_f32_le(weights, static_cast<float>(v.data()[j]));
        }
    }
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.tsv");
    std::ifstream weights(dir / "weights.bin", std::ios::binary);
    if (!manifest || !weights) {
        throw Error("cannot read checkpoint from " + dir.string());
    }
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(weights)), std::istreambuf_iterator<char>());
    std::size_t offset = 0;
    std::string line;
    std::size_t line_no = 0;
    std::size_t seen = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        std::string name;
        std::string shape;
        std::string dtype;
        if (!std::getline(fields, name, '\t') || !std::getline(fields, shape, '\t') ||
            !std::getline(fields, dtype, '\t')) {
            throw ParseError("malformed checkpoint manifest entry", line_no);
        }
        if (dtype != "float32") {
            throw ParseError("unsupported dtype " + dtype, line_no);
        }
        const auto x = shape.find('x');
        if (x == std::string::npos) {
            throw ParseError("malformed shape " + shape, line_no);
        }
        const std::size_t rows = std::stoul(shape.substr(0, x));
        const std::size_t cols = std::stoul(shape.substr(x + 1));
        Tensor& t = store.at(name);
        if (t.rows() != rows || t.cols() != cols) {
            throw ParseError("shape mismatch for " + name, line_no);
        }
        if (offset + rows * cols * 4 > blob.size()) {
            throw Error("checkpoint weights truncated at " + name);
        }
        Matrix& v = t.mutable_value();
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            v.data()[j] = static_cast<double>(read_f32_le(blob.data() + offset));
            offset += 4;
        }
        ++seen;
    }
    if (seen != store.size()) {
        throw Error("checkpoint has " + std::to_string(seen) + " tensors, model expects " +
                    std::to_string(store.size()));
    }
    if (offset != blob.size()) {
        throw Error("checkpoint weights have trailing bytes");
    }
}

}  // namespace surge::nn
