#include "surge/optim.hpp"

#include "surge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace surge::nn {

void AdamW::step(ParamStore& store, double lr) {
    auto& params = store.tensors();
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
            v_.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
        }
    }
    if (m_.size() != params.size()) {
        throw Error("AdamW: parameter store changed size between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].has_grad() && !params[i].grad().allFinite()) {
            throw Error("AdamW: non-finite gradient in parameter " + store.names()[i]);
        }
    }
    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        Matrix& value = p.mutable_value();
        value *= (1.0 - lr * config_.weight_decay);
        if (!p.has_grad()) {
            m_[i] *= b1;
            v_[i] *= b2;
            continue;
        }
        const Matrix g = p.grad();
        m_[i] = b1 * m_[i] + (1.0 - b1) * g;
        v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
        value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
    }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
    double sq = 0.0;
    for (const auto& p : store.tensors()) {
        if (p.has_grad()) {
            sq += p.node()->grad.squaredNorm();
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& p : store.tensors()) {
            if (p.has_grad()) {
                p.node()->grad *= s;
            }
        }
    }
    return norm;
}

double warmup_linear_lr(double base_lr, long step, long warmup_steps, long total_steps) {
    if (total_steps <= 0) {
        return base_lr;
    }
    if (warmup_steps > 0 && step < warmup_steps) {
        return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const long remaining = total_steps - step;
    const long span = std::max(1L, total_steps - warmup_steps);
    return base_lr * std::max(0.0, static_cast<double>(remaining) / static_cast<double>(span));
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           const GradCheckOptions& options) {
    for (auto& p : params) {
        p.zero_grad();
    }
    loss_fn().backward();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p.grad());
    }

    GradCheckResult result;
    std::mt19937_64 rng(options.seed);
    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Matrix& value = params[pi].mutable_value();
        std::vector<Eigen::Index> coords(static_cast<std::size_t>(value.size()));
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
        }
        for (Eigen::Index c : coords) {
            const double orig = value.data()[c];
            auto at = [&](double offset) {
                value.data()[c] = orig + offset;
                return loss_fn().item();
            };
            const double a = analytic[pi].data()[c];
            const double center = options.kink_retries > 0 ? at(0.0) : 0.0;
            double eps = options.epsilon;
            bool smooth = true;
            double numeric = 0.0;
            double prev_central = 0.0;
            double prev_asym = 0.0;
            for (std::size_t level = 0;; ++level) {
                const double plus = at(eps);
                const double minus = at(-eps);
                const double central = (plus - minus) / (2.0 * eps);
                numeric = central;
                if (options.kink_retries == 0) break;
                // Difference of the one-sided slopes. A smooth function gives
                // f''(x) * eps, which shrinks tenfold with the step; a kink does not.
                const double asym = (plus - 2.0 * center + minus) / eps;
                const double roundoff =
                    16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(center), 1.0) / eps;
                const double scale = std::max({std::abs(plus - center), std::abs(center - minus)}) / eps;
                if (std::abs(asym) <= options.kink_ratio * std::max(scale, options.abs_floor) + roundoff) {
                    smooth = true;
                    break;
                }
                if (level > 0 && std::abs(10.0 * asym - prev_asym) <= 0.2 * std::abs(prev_asym) + 10.0 * roundoff) {
                    numeric = prev_central;
                    smooth = true;
                    break;
                }
                smooth = false;
                if (level == options.kink_retries) break;
                prev_central = central;
                prev_asym = asym;
                eps /= 10.0;
            }
            value.data()[c] = orig;
            ++result.coords_checked;
            if (!smooth) {
                ++result.nonsmooth_coords;
                continue;
            }
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
        }
    }
    for (auto& p : params) {
        p.zero_grad();
    }
    return result;
}

}  // namespace surge::nn
