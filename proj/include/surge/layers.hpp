#pragma once

#include "surge/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace surge::nn {

using Rng = std::mt19937_64;

enum class Init {
    Normal,  // N(0, 0.02^2)
    Zeros,
    Ones,
};

/// Named trainable tensors in registration order. The order is the
/// checkpoint layout and the optimizer iteration order.
class ParamStore {
public:
    Tensor& create(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng);

    [[nodiscard]] Tensor& at(const std::string& name);
    [[nodiscard]] const Tensor& at(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

    [[nodiscard]] std::size_t size() const { return tensors_.size(); }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] std::vector<Tensor>& tensors() { return tensors_; }
    [[nodiscard]] const std::vector<Tensor>& tensors() const { return tensors_; }
    /// Parameters whose name starts with `prefix`.
    [[nodiscard]] std::vector<Tensor> with_prefix(const std::string& prefix) const;

    [[nodiscard]] std::size_t parameter_count() const;

    void zero_grad();
    /// Deep copy of all values, for best-checkpoint retention.
    [[nodiscard]] std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& values);

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::map<std::string, std::size_t> index_;
};

/// y = x W + b with W stored as in x out.
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           bool with_bias = true, Init weight_init = Init::Normal);

    [[nodiscard]] Tensor operator()(const Tensor& x) const;
    [[nodiscard]] std::size_t in_features() const { return weight.rows(); }
    [[nodiscard]] std::size_t out_features() const { return weight.cols(); }
};

/// Two linear layers with a ReLU between them.
struct Mlp {
    Linear first;
    Linear second;

    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
        Rng& rng, Init output_init = Init::Normal);

    [[nodiscard]] Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, std::size_t width, Rng& rng);

    [[nodiscard]] Tensor operator()(const Tensor& x) const;
};

/// Writes `manifest.tsv` (name, shape, dtype per line) and `weights.bin`
/// (little-endian float32, row-major, manifest order) into `dir`.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir);

/// Loads values into an already-constructed store; names and shapes must match.
void load_checkpoint(ParamStore& store, const std::filesystem::path& dir);

}  // namespace surge::nn
