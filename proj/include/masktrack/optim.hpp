#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "masktrack/error.hpp"

namespace masktrack {

// Temperature reparameterization: T = clamp(softplus(raw) + offset, min, max).
// The clamp is hard; its gradient is zero outside [min, max].
inline constexpr double kTemperatureOffset = 1e-3;
inline constexpr double kTemperatureMin = 0.8;
inline constexpr double kTemperatureMax = 2.0;

/// Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|)).
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Effective temperature for a raw parameter.
inline double softplus_temperature(double raw) {
    const double t = softplus(raw) + kTemperatureOffset;
    if (t < kTemperatureMin) return kTemperatureMin;
    if (t > kTemperatureMax) return kTemperatureMax;
    return t;
}

/// dT/draw. Zero where the clamp is active.
inline double softplus_temperature_grad(double raw) {
    const double t = softplus(raw) + kTemperatureOffset;
    if (t < kTemperatureMin || t > kTemperatureMax) return 0.0;
    return sigmoid(raw);
}

/// Scales `grads` in place so their L2 norm does not exceed `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(std::span<double> grads, double max_norm) {
    double sum_sq = 0.0;
    for (double g : grads) sum_sq += g * g;
    const double norm = std::sqrt(sum_sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
    return norm;
}

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
struct AdamWState {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

inline void adamw_step(AdamWState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size())
        throw DataError("adamw_step: parameter and gradient sizes differ");
    for (double g : grads)
        if (!std::isfinite(g)) throw NumericalError("adamw_step: non-finite gradient");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw DataError("adamw_step: optimizer state sized for a different parameter count");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * (m_hat / (std::sqrt(v_hat) + state.eps));
        params[i] -= state.lr * state.weight_decay * params[i];
    }
}

/// Linear warmup from 0 over `warmup_steps`, then cosine decay to 0 at
/// `total_steps`.
struct LrSchedule {
    double base_lr = 0.0;
    std::int64_t warmup_steps = 200;
    std::int64_t total_steps = 0;
};

inline double lr_at(const LrSchedule& schedule, std::int64_t step) {
    if (schedule.warmup_steps > schedule.total_steps)
        throw ConfigError("LrSchedule: warmup_steps exceeds total_steps");
    if (step < 0) throw ConfigError("LrSchedule: negative step");
    if (step >= schedule.total_steps) return 0.0;
    if (step <= schedule.warmup_steps) {
        if (schedule.warmup_steps == 0) return schedule.base_lr;
        return schedule.base_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
    }
    const double progress = static_cast<double>(step - schedule.warmup_steps) /
                            static_cast<double>(schedule.total_steps - schedule.warmup_steps);
    return schedule.base_lr * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

struct GradientCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool all_finite = true;
};

/// Central finite differences against an analytic gradient. Per-coordinate
/// error is |fd - an| / max(1, |fd|, |an|); the maximum over coordinates is
/// returned.
inline GradientCheckResult check_gradient(const std::function<double(std::span<const double>)>& f,
                                          std::span<const double> point,
                                          std::span<const double> analytic,
                                          double h = 1e-5) {
    if (point.size() != analytic.size())
        throw DataError("check_gradient: point and gradient sizes differ");
    GradientCheckResult result;
    std::vector<double> probe(point.begin(), point.end());
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe[i] = point[i] + h;
        const double plus = f(probe);
        probe[i] = point[i] - h;
        const double minus = f(probe);
        probe[i] = point[i];
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            result.all_finite = false;
            result.worst_index = i;
            result.max_rel_error = std::numeric_limits<double>::infinity();
            return result;
        }
        const double fd = (plus - minus) / (2.0 * h);
        const double err = std::abs(fd - analytic[i]) / std::max({1.0, std::abs(fd), std::abs(analytic[i])});
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_index = i;
        }
    }
    return result;
}

}  // namespace masktrack
