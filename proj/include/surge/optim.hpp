#pragma once

#include "surge/layers.hpp"

#include <functional>
#include <vector>

namespace surge::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// AdamW with decoupled weight decay and bias correction. Moment buffers are
/// aligned with the store's registration order.
class AdamW {
public:
    explicit AdamW(AdamWConfig config) : config_(config) {}

    /// Applies one update from the gradients currently held by `store`.
    /// Throws if any gradient is non-finite. `lr` overrides the configured
    /// rate (for schedules).
    void step(ParamStore& store, double lr);
    void step(ParamStore& store) { step(store, config_.lr); }

    [[nodiscard]] long steps_taken() const { return step_; }
    [[nodiscard]] const AdamWConfig& config() const { return config_; }

private:
    AdamWConfig config_;
    long step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

/// Linear warmup over `warmup_steps`, then linear decay to zero at `total_steps`.
double warmup_linear_lr(double base_lr, long step, long warmup_steps, long total_steps);

struct GradCheckOptions {
    double epsilon = 1e-5;
    /// Coordinates checked per tensor; larger tensors are subsampled.
    std::size_t max_coords_per_tensor = 24;
    /// Denominator floor so that near-zero gradients compare absolutely.
    double abs_floor = 1e-6;
    std::uint64_t seed = 0;
    /// When the one-sided slopes at a coordinate differ by more than
    /// `kink_ratio` (relative, beyond float roundoff), the step is divided by 10
    /// up to this many times. A difference that shrinks tenfold with the step is
    /// curvature; one that does not is a kink inside [-eps, eps] (a ReLU
    /// switching), and the smaller step is used.
    std::size_t kink_retries = 0;
    double kink_ratio = 1e-4;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    /// Coordinates still nonsmooth after all retries; excluded from the error.
    std::size_t nonsmooth_coords = 0;
};

/// Compares analytic gradients against central finite differences.
/// `loss_fn` must rebuild the graph from the current parameter values on every
/// call and return a 1x1 tensor.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

}  // namespace surge::nn
