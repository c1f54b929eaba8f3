#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace surge::nn {

/// Dense row-major storage used for every tensor value and gradient.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
    Matrix value;
    Matrix grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

/// A two-dimensional tensor participating in reverse-mode differentiation.
///
/// Tensors are cheap handles over a shared graph node. Vectors are 1 x n,
/// scalars are 1 x 1. Leaf tensors with requires_grad accumulate gradients
/// across backward passes until zero_grad() is called.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Matrix value, bool requires_grad = false);

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor row(std::span<const double> values);

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(node_->value.rows()); }
    [[nodiscard]] std::size_t cols() const { return static_cast<std::size_t>(node_->value.cols()); }
    [[nodiscard]] std::vector<std::size_t> shape() const { return {rows(), cols()}; }
    [[nodiscard]] std::size_t size() const { return rows() * cols(); }

    [[nodiscard]] const Matrix& value() const { return node_->value; }
    /// Mutable access for optimizers and initializers; never call on a tensor
    /// that is part of a graph awaiting backward().
    Matrix& mutable_value() { return node_->value; }

    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
    /// Gradient, or zeros of the value's shape when nothing has accumulated.
    [[nodiscard]] Matrix grad() const;
    void zero_grad() { node_->grad.resize(0, 0); }

    [[nodiscard]] double item() const;

    /// Seeds d(this)/d(this) = 1 and accumulates into every reachable leaf.
    /// Interior nodes do not retain gradients afterwards.
    void backward() const;

    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend Tensor make_result(Matrix value, std::vector<Tensor> parents,
                              std::function<void(Node&)> backward_fn);

    std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] bool grad_enabled();

/// Creates an op result. Parents and backward_fn are only retained when
/// recording is enabled and some parent requires a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

/// Same value, no history.
Tensor detach(const Tensor& t);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);
/// Left-multiplies by a constant matrix (aggregation operators, selectors).
Tensor constant_matmul(const Matrix& lhs, const Tensor& b);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);  // broadcast 1 x c over rows
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor add_constant(const Tensor& a, const Matrix& c);
Tensor scale(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s is 1 x 1
Tensor div_scalar(const Tensor& a, const Tensor& s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

// Normalizations
enum class Axis { Rows = 0, Cols = 1 };
/// Softmax along `axis`: Axis::Cols normalizes each row across its columns.
Tensor softmax(const Tensor& a, Axis axis = Axis::Cols);
Tensor log_softmax(const Tensor& a, Axis axis = Axis::Cols);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor normalize_rows(const Tensor& a);

// Shape manipulation
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
Tensor select(const Tensor& a, std::size_t r, std::size_t c);  // 1 x 1

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // 1 x cols
Tensor logsumexp(const Tensor& a);  // over all elements

/// Cosine similarity of two equal-length vectors; throws on a zero vector.
Tensor cosine_sim(const Tensor& u, const Tensor& v);

}  // namespace surge::nn
