#include "surge/tensor.hpp"

#include "surge/error.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace surge::nn {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const char* what) {
    if (!cond) {
        throw Error(what);
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
    }
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (!requires_grad) {
        return;
    }
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return Tensor(Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                  requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::row(std::span<const double> values) {
    Matrix m(1, static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        m(0, static_cast<Eigen::Index>(i)) = values[i];
    }
    return Tensor(std::move(m));
}

Matrix Tensor::grad() const {
    if (node_->grad.size() == 0) {
        return Matrix::Zero(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
}

double Tensor::item() const {
    require(size() == 1, "item() requires a 1x1 tensor");
    return node_->value(0, 0);
}

void Tensor::backward() const {
    require(size() == 1, "backward() requires a scalar loss");
    if (!node_->requires_grad) {
        return;
    }
    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.contains(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) {
            n->backward_fn(*n);
            // Interior gradients are released so a later backward() through
            // a shared subgraph does not propagate them twice.
            n->grad.resize(0, 0);
        }
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) {
            any = any || p.requires_grad();
        }
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (auto& p : parents) {
                node->parents.push_back(p.node());
            }
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

Tensor detach(const Tensor& t) { return Tensor(t.value(), false); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw Error("matmul: inner dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + ")");
    }
    Matrix out = a.value() * b.value();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
        if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw Error("matmul_nt: width mismatch");
    }
    Matrix out = a.value() * b.value().transpose();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad * pb.value);
        if (pb.requires_grad) pb.accumulate(n.grad.transpose() * pa.value);
    });
}

Tensor transpose(const Tensor& a) {
    Matrix out = a.value().transpose();
    return make_result(std::move(out), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad.transpose()); });
}

Tensor constant_matmul(const Matrix& lhs, const Tensor& b) {
    if (lhs.cols() != static_cast<Eigen::Index>(b.rows())) {
        throw Error("constant_matmul: inner dimension mismatch");
    }
    Matrix out = lhs * b.value();
    return make_result(std::move(out), {b}, [lhs](Node& n) { parent(n, 0).accumulate(lhs.transpose() * n.grad); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Matrix out = a.value() + b.value();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        parent(n, 0).accumulate(n.grad);
        parent(n, 1).accumulate(n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a.value() - b.value();
    return make_result(std::move(out), {a, b}, [](Node& n) {
        parent(n, 0).accumulate(n.grad);
        parent(n, 1).accumulate(-n.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Matrix out = a.value().cwiseProduct(b.value());
    return make_result(std::move(out), {a, b}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pb = parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw Error("add_row: expected 1x" + std::to_string(a.cols()) + " row");
    }
    Matrix out = a.value().rowwise() + row.value().row(0);
    return make_result(std::move(out), {a, row}, [](Node& n) {
        parent(n, 0).accumulate(n.grad);
        Node& pr = parent(n, 1);
        if (pr.requires_grad) pr.accumulate(n.grad.colwise().sum());
    });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw Error("mul_row: expected 1x" + std::to_string(a.cols()) + " row");
    }
    Matrix out = a.value().array().rowwise() * row.value().row(0).array();
    return make_result(std::move(out), {a, row}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& pr = parent(n, 1);
        if (pa.requires_grad) {
            Matrix g = n.grad.array().rowwise() * pr.value.row(0).array();
            pa.accumulate(g);
        }
        if (pr.requires_grad) pr.accumulate(n.grad.cwiseProduct(pa.value).colwise().sum());
    });
}

Tensor add_constant(const Tensor& a, const Matrix& c) {
    if (c.rows() != static_cast<Eigen::Index>(a.rows()) || c.cols() != static_cast<Eigen::Index>(a.cols())) {
        throw Error("add_constant: shape mismatch");
    }
    Matrix out = a.value() + c;
    return make_result(std::move(out), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Tensor scale(const Tensor& a, double s) {
    Matrix out = a.value() * s;
    return make_result(std::move(out), {a}, [s](Node& n) { parent(n, 0).accumulate(n.grad * s); });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    require(s.size() == 1, "mul_scalar: scalar operand must be 1x1");
    Matrix out = a.value() * s.item();
    return make_result(std::move(out), {a, s}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& ps = parent(n, 1);
        double sv = ps.value(0, 0);
        if (pa.requires_grad) pa.accumulate(n.grad * sv);
        if (ps.requires_grad) {
            Matrix g(1, 1);
            g(0, 0) = n.grad.cwiseProduct(pa.value).sum();
            ps.accumulate(g);
        }
    });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    require(s.size() == 1, "div_scalar: scalar operand must be 1x1");
    Matrix out = a.value() / s.item();
    return make_result(std::move(out), {a, s}, [](Node& n) {
        Node& pa = parent(n, 0);
        Node& ps = parent(n, 1);
        double sv = ps.value(0, 0);
        if (pa.requires_grad) pa.accumulate(n.grad / sv);
        if (ps.requires_grad) {
            Matrix g(1, 1);
            g(0, 0) = -n.grad.cwiseProduct(pa.value).sum() / (sv * sv);
            ps.accumulate(g);
        }
    });
}

Tensor relu(const Tensor& a) {
    Matrix out = a.value().cwiseMax(0.0);
    return make_result(std::move(out), {a}, [](Node& n) {
        Node& pa = parent(n, 0);
        Matrix g = (pa.value.array() > 0.0).select(n.grad, 0.0);
        pa.accumulate(g);
    });
}

Tensor exp(const Tensor& a) {
    Matrix out = a.value().array().exp().matrix();
    return make_result(std::move(out), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad.cwiseProduct(n.value)); });
}

Tensor log(const Tensor& a) {
    Matrix out = a.value().array().log().matrix();
    return make_result(std::move(out), {a}, [](Node& n) {
        Node& pa = parent(n, 0);
        pa.accumulate(n.grad.cwiseQuotient(pa.value));
    });
}

Tensor clamp_min(const Tensor& a, double lo) {
    Matrix out = a.value().cwiseMax(lo);
    return make_result(std::move(out), {a}, [lo](Node& n) {
        Node& pa = parent(n, 0);
        Matrix g = (pa.value.array() >= lo).select(n.grad, 0.0);
        pa.accumulate(g);
    });
}

namespace {

Matrix softmax_rows_value(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mx = x.row(r).maxCoeff();
        auto e = (x.row(r).array() - mx).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

Matrix log_softmax_rows_value(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mx = x.row(r).maxCoeff();
        double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        out.row(r) = x.row(r).array() - lse;
    }
    return out;
}

}  // namespace

Tensor softmax(const Tensor& a, Axis axis) {
    if (axis == Axis::Rows) {
        return transpose(softmax(transpose(a), Axis::Cols));
    }
    if (a.cols() == 0) {
        throw Error("softmax: empty axis");
    }
    Matrix out = softmax_rows_value(a.value());
    return make_result(std::move(out), {a}, [](Node& n) {
        // dx = y * (g - sum(g * y))
        Matrix gy = n.grad.cwiseProduct(n.value);
        Eigen::VectorXd s = gy.rowwise().sum();
        Matrix g = gy - (n.value.array().colwise() * s.array()).matrix();
        parent(n, 0).accumulate(g);
    });
}

Tensor log_softmax(const Tensor& a, Axis axis) {
    if (axis == Axis::Rows) {
        return transpose(log_softmax(transpose(a), Axis::Cols));
    }
    if (a.cols() == 0) {
        throw Error("log_softmax: empty axis");
    }
    Matrix out = log_softmax_rows_value(a.value());
    return make_result(std::move(out), {a}, [](Node& n) {
        // dx = g - softmax * sum(g)
        Eigen::VectorXd s = n.grad.rowwise().sum();
        Matrix sm = n.value.array().exp().matrix();
        Matrix g = n.grad - (sm.array().colwise() * s.array()).matrix();
        parent(n, 0).accumulate(g);
    });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    const auto cols = static_cast<Eigen::Index>(a.cols());
    if (gain.cols() != a.cols() || bias.cols() != a.cols() || gain.rows() != 1 || bias.rows() != 1) {
        throw Error("layer_norm: gain/bias width mismatch");
    }
    const Matrix& x = a.value();
    Matrix xhat(x.rows(), cols);
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    return make_result(std::move(out), {a, gain, bias}, [xhat, inv_std](Node& n) {
        Node& px = parent(n, 0);
        Node& pg = parent(n, 1);
        Node& pb = parent(n, 2);
        if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
        if (px.requires_grad) {
            Matrix gx = n.grad.array().rowwise() * pg.value.row(0).array();
            const double d = static_cast<double>(gx.cols());
            Matrix dx(gx.rows(), gx.cols());
            for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                double m1 = gx.row(r).mean();
                double m2 = gx.row(r).cwiseProduct(xhat.row(r)).sum() / d;
                dx.row(r) = (gx.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
            }
            px.accumulate(dx);
        }
    });
}

Tensor normalize_rows(const Tensor& a) {
    const Matrix& x = a.value();
    Eigen::VectorXd norms = x.rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r) {
        if (norms(r) == 0.0) {
            throw Error("normalize_rows: zero vector");
        }
    }
    Matrix out = x.array().colwise() / norms.array();
    return make_result(std::move(out), {a}, [norms](Node& n) {
        // d(x/|x|) = (g - y (g.y)) / |x|
        Eigen::VectorXd gy = n.grad.cwiseProduct(n.value).rowwise().sum();
        Matrix g = n.grad - (n.value.array().colwise() * gy.array()).matrix();
        g = g.array().colwise() / norms.array();
        parent(n, 0).accumulate(g);
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const auto rows = static_cast<Eigen::Index>(parts.front().rows());
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        require(static_cast<Eigen::Index>(p.rows()) == rows, "concat_cols: row count mismatch");
        total += static_cast<Eigen::Index>(p.cols());
    }
    Matrix out(rows, total);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        out.middleCols(off, static_cast<Eigen::Index>(p.cols())) = p.value();
        off += static_cast<Eigen::Index>(p.cols());
    }
    return make_result(std::move(out), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            Node& p = parent(n, i);
            if (p.requires_grad) p.accumulate(n.grad.middleCols(offsets[i], p.value.cols()));
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const auto cols = static_cast<Eigen::Index>(parts.front().cols());
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        require(static_cast<Eigen::Index>(p.cols()) == cols, "concat_rows: column count mismatch");
        total += static_cast<Eigen::Index>(p.rows());
    }
    Matrix out(total, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        out.middleRows(off, static_cast<Eigen::Index>(p.rows())) = p.value();
        off += static_cast<Eigen::Index>(p.rows());
    }
    return make_result(std::move(out), parts, [offsets](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            Node& p = parent(n, i);
            if (p.requires_grad) p.accumulate(n.grad.middleRows(offsets[i], p.value.rows()));
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    require(begin + count <= a.rows(), "slice_rows: out of range");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    Matrix out = a.value().middleRows(b, c);
    return make_result(std::move(out), {a}, [b, c](Node& n) {
        Node& p = parent(n, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleRows(b, c) = n.grad;
        p.accumulate(g);
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require(begin + count <= a.cols(), "slice_cols: out of range");
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    Matrix out = a.value().middleCols(b, c);
    return make_result(std::move(out), {a}, [b, c](Node& n) {
        Node& p = parent(n, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g.middleCols(b, c) = n.grad;
        p.accumulate(g);
    });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    const auto cols = static_cast<Eigen::Index>(table.cols());
    Matrix out(static_cast<Eigen::Index>(ids.size()), cols);
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= table.rows()) {
            throw Error("gather_rows: index " + std::to_string(idx[i]) + " out of range " +
                        std::to_string(table.rows()));
        }
        out.row(static_cast<Eigen::Index>(i)) = table.value().row(static_cast<Eigen::Index>(idx[i]));
    }
    return make_result(std::move(out), {table}, [idx = std::move(idx)](Node& n) {
        Node& p = parent(n, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            g.row(static_cast<Eigen::Index>(idx[i])) += n.grad.row(static_cast<Eigen::Index>(i));
        }
        p.accumulate(g);
    });
}

Tensor select(const Tensor& a, std::size_t r, std::size_t c) {
    require(r < a.rows() && c < a.cols(), "select: out of range");
    const auto ri = static_cast<Eigen::Index>(r);
    const auto ci = static_cast<Eigen::Index>(c);
    Matrix out(1, 1);
    out(0, 0) = a.value()(ri, ci);
    return make_result(std::move(out), {a}, [ri, ci](Node& n) {
        Node& p = parent(n, 0);
        Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
        g(ri, ci) = n.grad(0, 0);
        p.accumulate(g);
    });
}

Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return make_result(std::move(out), {a}, [](Node& n) {
        Node& p = parent(n, 0);
        p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
    });
}

Tensor mean(const Tensor& a) {
    require(a.size() > 0, "mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
    require(a.rows() > 0, "mean_rows: no rows");
    Matrix out = a.value().colwise().mean();
    return make_result(std::move(out), {a}, [](Node& n) {
        Node& p = parent(n, 0);
        const double inv = 1.0 / static_cast<double>(p.value.rows());
        Matrix g = n.grad.replicate(p.value.rows(), 1) * inv;
        p.accumulate(g);
    });
}

Tensor logsumexp(const Tensor& a) {
    require(a.size() > 0, "logsumexp: empty tensor");
    const double mx = a.value().maxCoeff();
    Matrix out(1, 1);
    if (mx == -std::numeric_limits<double>::infinity()) {
        out(0, 0) = mx;
    } else {
        out(0, 0) = mx + std::log((a.value().array() - mx).exp().sum());
    }
    return make_result(std::move(out), {a}, [](Node& n) {
        Node& p = parent(n, 0);
        Matrix w = (p.value.array() - n.value(0, 0)).exp().matrix();
        p.accumulate(w * n.grad(0, 0));
    });
}

Tensor cosine_sim(const Tensor& u, const Tensor& v) {
    if (u.size() != v.size()) {
        throw Error("cosine_sim: length mismatch");
    }
    if (u.value().norm() == 0.0 || v.value().norm() == 0.0) {
        throw Error("cosine_sim: zero vector");
    }
    Tensor ur = u.rows() == 1 ? u : transpose(u);
    Tensor vr = v.rows() == 1 ? v : transpose(v);
    return matmul_nt(normalize_rows(ur), normalize_rows(vr));
}

}  // namespace surge::nn
