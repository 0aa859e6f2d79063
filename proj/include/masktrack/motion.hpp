#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/logit_map.hpp"
#include "masktrack/mask.hpp"
#include "masktrack/optim.hpp"

namespace masktrack {

// Normalized sigma floor so that one-pixel objects do not collapse the prior
// into a delta spike.
inline constexpr double kSigmaFloor = 1e-3;

/// Normalized centroid, bounding-box extent and per-frame velocity of one
/// tracked object. Position stays in [0,1]^2, extent in (0,1]^2, velocity in
/// [-1,1]^2. frames_since_observation is 0 exactly when the last frame
/// carried a valid observation.
struct KinematicState {
    NormalizedPoint position;
    NormalizedExtent extent;
    double velocity_x = 0.0;
    double velocity_y = 0.0;
    int frames_since_observation = 0;
};

struct MotionConfig {
    double alpha = 0.9;          // EMA momentum on position and extent
    double beta = 0.5;           // prior influence on logits
    double sigma_scale_x = 0.5;  // sigma_x = sigma_scale_x * extent.w
    double sigma_scale_y = 0.5;  // sigma_y = sigma_scale_y * extent.h
    double epsilon = 1e-6;       // stabilizer inside log(G + epsilon)
    int min_valid_area = 1;      // observed masks below this area count as missing
};

inline void validate(const MotionConfig& config) {
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw ConfigError("mpm.alpha must be in (0, 1)");
    if (!(config.beta >= 0.0)) throw ConfigError("mpm.beta must be >= 0");
    if (!(config.sigma_scale_x > 0.0 && config.sigma_scale_y > 0.0))
        throw ConfigError("mpm.sigma_scale components must be > 0");
    if (!(config.epsilon > 0.0)) throw ConfigError("mpm.epsilon must be > 0");
    if (config.min_valid_area < 1) throw ConfigError("mpm.min_valid_area must be >= 1");
}

/// Image-sized map peaking at the predicted object center, values in (0, 1].
struct GaussianPrior {
    FrameSize size;
    std::vector<double> values;  // row-major

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * size.width + x]; }
};

/// State from the first annotated frame: centroid, bounding box, zero
/// velocity.
inline KinematicState init_state(const BinaryMask& first_mask) {
    const auto c = centroid(first_mask);
    const auto e = extent(first_mask);
    if (!c || !e) throw DataError("init_state: first-frame mask is empty");
    KinematicState state;
    state.position = *c;
    state.extent = *e;
    state.velocity_x = 0.0;
    state.velocity_y = 0.0;
    state.frames_since_observation = 0;
    return state;
}

namespace detail {
inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }
}  // namespace detail

/// Advances the state by one frame. A valid observation (mask present, same
/// frame size, area >= min_valid_area) is folded in with an EMA on position
/// and extent; velocity is the displacement of the smoothed positions,
/// computed after the EMA and without smoothing of its own. Without a valid
/// observation the position is extrapolated by the last known velocity and
/// clamped to [0,1]; extent and velocity are left untouched so the object can
/// be picked up again when it reappears.
inline KinematicState observe(const KinematicState& prev, const BinaryMask* mask,
                              FrameSize frame, const MotionConfig& config) {
    bool valid = false;
    if (mask != nullptr) {
        if (mask->size() != frame)
            throw DataError("observe: mask size does not match the tracked frame size");
        valid = mask_area(*mask) >= config.min_valid_area;
    }

    KinematicState next = prev;
    if (valid) {
        const auto c = *centroid(*mask);
        const auto e = *extent(*mask);
        next.position.x = config.alpha * prev.position.x + (1.0 - config.alpha) * c.x;
        next.position.y = config.alpha * prev.position.y + (1.0 - config.alpha) * c.y;
        next.extent.w = config.alpha * prev.extent.w + (1.0 - config.alpha) * e.w;
        next.extent.h = config.alpha * prev.extent.h + (1.0 - config.alpha) * e.h;
        next.velocity_x = next.position.x - prev.position.x;
        next.velocity_y = next.position.y - prev.position.y;
        next.frames_since_observation = 0;
    } else {
        next.position.x = detail::clamp01(prev.position.x + prev.velocity_x);
        next.position.y = detail::clamp01(prev.position.y + prev.velocity_y);
        next.frames_since_observation = prev.frames_since_observation + 1;
    }
    return next;
}

namespace detail {
inline double sigma_from_scale(double scale, double extent) {
    return std::max(scale * extent, kSigmaFloor);
}
}  // namespace detail

/// Gaussian map centered at the state's position, evaluated at normalized
/// pixel centers, with stddev proportional to the estimated extent:
///   G(i,j) = exp(-(cx(i)-x)^2 / (2 sigma_x^2) - (cy(j)-y)^2 / (2 sigma_y^2)).
/// Computed separably as gx(i) * gy(j).
inline GaussianPrior gaussian_prior(const KinematicState& state, FrameSize size,
                                    const MotionConfig& config) {
    if (!size.valid()) throw DataError("gaussian_prior: frame size must be at least 1x1");
    const double sigma_x = detail::sigma_from_scale(config.sigma_scale_x, state.extent.w);
    const double sigma_y = detail::sigma_from_scale(config.sigma_scale_y, state.extent.h);

    std::vector<double> gx(size.width);
    std::vector<double> gy(size.height);
    for (int i = 0; i < size.width; ++i) {
        const double dx = (i + 0.5) / size.width - state.position.x;
        gx[i] = std::exp(-dx * dx / (2.0 * sigma_x * sigma_x));
    }
    for (int j = 0; j < size.height; ++j) {
        const double dy = (j + 0.5) / size.height - state.position.y;
        gy[j] = std::exp(-dy * dy / (2.0 * sigma_y * sigma_y));
    }

    GaussianPrior prior{size, std::vector<double>(static_cast<std::size_t>(size.pixels()))};
    for (int j = 0; j < size.height; ++j)
        for (int i = 0; i < size.width; ++i)
            prior.values[static_cast<std::size_t>(j) * size.width + i] = gx[i] * gy[j];
    return prior;
}

/// Adds beta * log(G_l + epsilon) to each foreground channel l; the
/// background channel passes through untouched. One prior per foreground
/// channel, in channel order.
inline LogitMap blend_logits(const LogitMap& raw, std::span<const GaussianPrior> priors,
                             const MotionConfig& config) {
    if (static_cast<int>(priors.size()) != raw.channels() - 1)
        throw DataError("blend_logits: need exactly one prior per foreground channel");
    for (const auto& prior : priors)
        if (prior.size != raw.size())
            throw DataError("blend_logits: prior size does not match logit size");
    if (config.beta == 0.0) return raw;

    LogitMap blended = raw;
    for (int c = 1; c < raw.channels(); ++c) {
        const GaussianPrior& prior = priors[c - 1];
        for (int y = 0; y < raw.height(); ++y)
            for (int x = 0; x < raw.width(); ++x)
                blended.at(c, x, y) += config.beta * std::log(prior.at(x, y) + config.epsilon);
    }
    return blended;
}

// --- Online adaptation of (beta, sigma_scale_x, sigma_scale_y) -------------
//
// The segmentation logits are treated as frozen input; the only trainable
// scalars are the prior weight and the two sigma scales. Gradients are
// analytic: dZ/dbeta = log(G + eps), dZ/dscale flows through dG/dsigma.

/// Mean per-pixel softmax cross-entropy of the blended logits against a
/// label grid. Pure in (beta, sigma_scale) so it doubles as the
/// finite-difference reference for the analytic gradient.
inline double blended_cross_entropy(const LogitMap& raw, std::span<const KinematicState> states,
                                    const LabelGrid& gt, const MotionConfig& config) {
    if (gt.size() != raw.size())
        throw DataError("blended_cross_entropy: label grid size does not match logits");
    std::vector<GaussianPrior> priors;
    priors.reserve(states.size());
    for (const auto& state : states) priors.push_back(gaussian_prior(state, raw.size(), config));
    const LogitMap blended = blend_logits(raw, priors, config);

    const int channels = blended.channels();
    double loss = 0.0;
    for (int y = 0; y < blended.height(); ++y) {
        for (int x = 0; x < blended.width(); ++x) {
            const int label = gt.at(x, y);
            if (label >= channels)
                throw DataError("blended_cross_entropy: label exceeds channel count");
            double max_logit = blended.at(0, x, y);
            for (int c = 1; c < channels; ++c) max_logit = std::max(max_logit, blended.at(c, x, y));
            double sum_exp = 0.0;
            for (int c = 0; c < channels; ++c) sum_exp += std::exp(blended.at(c, x, y) - max_logit);
            loss += std::log(sum_exp) - (blended.at(label, x, y) - max_logit);
        }
    }
    return loss / static_cast<double>(raw.size().pixels());
}

/// Analytic gradient of blended_cross_entropy w.r.t.
/// (beta, sigma_scale_x, sigma_scale_y). Where the sigma floor is active the
/// corresponding scale gradient is zero.
inline std::array<double, 3> blended_cross_entropy_grad(const LogitMap& raw,
                                                        std::span<const KinematicState> states,
                                                        const LabelGrid& gt,
                                                        const MotionConfig& config) {
    if (gt.size() != raw.size())
        throw DataError("blended_cross_entropy_grad: label grid size does not match logits");
    if (static_cast<int>(states.size()) != raw.channels() - 1)
        throw DataError("blended_cross_entropy_grad: need one state per foreground channel");

    const FrameSize size = raw.size();
    const int channels = raw.channels();
    std::vector<GaussianPrior> priors;
    priors.reserve(states.size());
    for (const auto& state : states) priors.push_back(gaussian_prior(state, size, config));
    const LogitMap blended = blend_logits(raw, priors, config);

    const double inv_pixels = 1.0 / static_cast<double>(size.pixels());
    double d_beta = 0.0;
    double d_sx = 0.0;
    double d_sy = 0.0;
    std::vector<double> probs(channels);
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            double max_logit = blended.at(0, x, y);
            for (int c = 1; c < channels; ++c) max_logit = std::max(max_logit, blended.at(c, x, y));
            double sum_exp = 0.0;
            for (int c = 0; c < channels; ++c) {
                probs[c] = std::exp(blended.at(c, x, y) - max_logit);
                sum_exp += probs[c];
            }
            const int label = gt.at(x, y);
            for (int c = 1; c < channels; ++c) {
                const double dz = (probs[c] / sum_exp - (c == label ? 1.0 : 0.0)) * inv_pixels;
                const KinematicState& state = states[c - 1];
                const double g = priors[c - 1].at(x, y);
                d_beta += dz * std::log(g + config.epsilon);

                // dZ/dsigma = beta * G/(G+eps) * d^2/sigma^3, then
                // dsigma/dscale = extent unless floored.
                const double common = dz * config.beta * (g / (g + config.epsilon));
                const double sigma_x = detail::sigma_from_scale(config.sigma_scale_x, state.extent.w);
                if (config.sigma_scale_x * state.extent.w > kSigmaFloor) {
                    const double dx = (x + 0.5) / size.width - state.position.x;
                    d_sx += common * (dx * dx / (sigma_x * sigma_x * sigma_x)) * state.extent.w;
                }
                const double sigma_y = detail::sigma_from_scale(config.sigma_scale_y, state.extent.h);
                if (config.sigma_scale_y * state.extent.h > kSigmaFloor) {
                    const double dy = (y + 0.5) / size.height - state.position.y;
                    d_sy += common * (dy * dy / (sigma_y * sigma_y * sigma_y)) * state.extent.h;
                }
            }
        }
    }
    return {d_beta, d_sx, d_sy};
}

struct AdaptResult {
    double loss = 0.0;
    bool applied = false;
};

/// One AdamW update of (beta, sigma_scale_x, sigma_scale_y) against the
/// cross-entropy of the blended logits, with global-norm gradient clipping.
/// A non-finite loss aborts the step and leaves the parameters untouched.
inline AdaptResult adapt_step(MotionConfig& config, AdamWState& optimizer, const LogitMap& raw,
                              std::span<const KinematicState> states, const LabelGrid& gt,
                              double clip_norm = 1.0) {
    AdaptResult result;
    result.loss = blended_cross_entropy(raw, states, gt, config);
    if (!std::isfinite(result.loss)) return result;

    auto grads = blended_cross_entropy_grad(raw, states, gt, config);
    clip_global_norm(grads, clip_norm);
    std::array<double, 3> params{config.beta, config.sigma_scale_x, config.sigma_scale_y};
    adamw_step(optimizer, params, grads);
    config.beta = params[0];
    config.sigma_scale_x = params[1];
    config.sigma_scale_y = params[2];
    result.applied = true;
    return result;
}

/// The per-annotated-frame adaptation protocol: a fixed number of
/// consecutive update steps on one frame. Returns the loss before each step.
inline std::vector<double> adapt_frame(MotionConfig& config, AdamWState& optimizer,
                                       const LogitMap& raw, std::span<const KinematicState> states,
                                       const LabelGrid& gt, int steps = 5, double clip_norm = 1.0) {
    std::vector<double> losses;
    losses.reserve(steps);
    for (int i = 0; i < steps; ++i) {
        const AdaptResult r = adapt_step(config, optimizer, raw, states, gt, clip_norm);
        losses.push_back(r.loss);
        if (!r.applied) break;
    }
    return losses;
}

}  // namespace masktrack
