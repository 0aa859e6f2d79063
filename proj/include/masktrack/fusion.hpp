#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/logit_map.hpp"
#include "masktrack/mask.hpp"
#include "masktrack/optim.hpp"

namespace masktrack {

// Four logit providers are fused, in fixed order: the two standalone base
// segmenters first, then the combined model without the motion prior, then
// the combined model with it.
inline constexpr int kBranchCount = 4;

/// Per-branch scalars: one weight for all foreground channels, one for the
/// background channel, a bias added to every element, and a raw temperature
/// that passes through softplus_temperature before dividing the logits.
struct BranchParams {
    double w_fg = 1.0;
    double w_bg = 1.0;
    double bias = 0.0;
    double temp_raw = 1.2;

    bool operator==(const BranchParams&) const = default;
};

struct FusionParams {
    std::array<BranchParams, kBranchCount> branches{};

    bool operator==(const FusionParams&) const = default;

    std::array<double, 4 * kBranchCount> flatten() const {
        std::array<double, 4 * kBranchCount> flat{};
        for (int b = 0; b < kBranchCount; ++b) {
            flat[4 * b + 0] = branches[b].w_fg;
            flat[4 * b + 1] = branches[b].w_bg;
            flat[4 * b + 2] = branches[b].bias;
            flat[4 * b + 3] = branches[b].temp_raw;
        }
        return flat;
    }

    static FusionParams unflatten(std::span<const double> flat) {
        if (flat.size() != 4 * kBranchCount)
            throw DataError("FusionParams: expected 16 scalars");
        FusionParams params;
        for (int b = 0; b < kBranchCount; ++b) {
            params.branches[b].w_fg = flat[4 * b + 0];
            params.branches[b].w_bg = flat[4 * b + 1];
            params.branches[b].bias = flat[4 * b + 2];
            params.branches[b].temp_raw = flat[4 * b + 3];
        }
        return params;
    }
};

using LogitStack = std::array<LogitMap, kBranchCount>;

inline void validate(const LogitStack& stack) {
    for (int b = 1; b < kBranchCount; ++b) {
        if (stack[b].size() != stack[0].size() || stack[b].channels() != stack[0].channels())
            throw DataError("LogitStack: branch shapes differ");
    }
    for (const auto& map : stack)
        if (!all_finite(map)) throw DataError("LogitStack: non-finite logit value");
}

/// Weighted combination of the four branches:
///   F = sum_b [ W_b (Z_b / T_b) + bias_b ]
/// where W_b applies w_bg to channel 0 and w_fg to the object channels.
inline LogitMap fuse(const LogitStack& stack, const FusionParams& params) {
    validate(stack);
    const FrameSize size = stack[0].size();
    const int channels = stack[0].channels();

    LogitMap fused(size, channels);
    for (int b = 0; b < kBranchCount; ++b) {
        const BranchParams& p = params.branches[b];
        const double temp = softplus_temperature(p.temp_raw);
        for (int c = 0; c < channels; ++c) {
            const double weight = (c == 0 ? p.w_bg : p.w_fg) / temp;
            for (int y = 0; y < size.height; ++y)
                for (int x = 0; x < size.width; ++x)
                    fused.at(c, x, y) += weight * stack[b].at(c, x, y) + p.bias;
        }
    }
    return fused;
}

struct FusionSample {
    LogitStack stack;
    LabelGrid labels;
};

/// Mean per-pixel softmax cross-entropy of the fused logits against the
/// sample's labels. Pure in the parameters; the finite-difference oracle
/// drives this directly.
inline double fusion_loss(const FusionParams& params, const FusionSample& sample) {
    const LogitMap fused = fuse(sample.stack, params);
    if (sample.labels.size() != fused.size())
        throw DataError("fusion_loss: label grid size does not match logits");
    const int channels = fused.channels();
    double loss = 0.0;
    for (int y = 0; y < fused.height(); ++y) {
        for (int x = 0; x < fused.width(); ++x) {
            const int label = sample.labels.at(x, y);
            if (label >= channels) throw DataError("fusion_loss: label exceeds channel count");
            double max_logit = fused.at(0, x, y);
            for (int c = 1; c < channels; ++c) max_logit = std::max(max_logit, fused.at(c, x, y));
            double sum_exp = 0.0;
            for (int c = 0; c < channels; ++c) sum_exp += std::exp(fused.at(c, x, y) - max_logit);
            loss += std::log(sum_exp) - (fused.at(label, x, y) - max_logit);
        }
    }
    return loss / static_cast<double>(fused.size().pixels());
}

/// Analytic gradient of fusion_loss w.r.t. the 16 scalars, in flatten()
/// order. The temperature gradient flows through softplus and is cut to zero
/// by the hard clamp.
inline std::array<double, 4 * kBranchCount> fusion_grad(const FusionParams& params,
                                                        const FusionSample& sample) {
    const LogitMap fused = fuse(sample.stack, params);
    if (sample.labels.size() != fused.size())
        throw DataError("fusion_grad: label grid size does not match logits");
    const FrameSize size = fused.size();
    const int channels = fused.channels();
    const double inv_pixels = 1.0 / static_cast<double>(size.pixels());

    std::array<double, kBranchCount> temps{};
    std::array<double, kBranchCount> temp_grads{};
    for (int b = 0; b < kBranchCount; ++b) {
        temps[b] = softplus_temperature(params.branches[b].temp_raw);
        temp_grads[b] = softplus_temperature_grad(params.branches[b].temp_raw);
    }

    std::array<double, 4 * kBranchCount> grads{};
    std::vector<double> probs(channels);
    for (int y = 0; y < size.height; ++y) {
        for (int x = 0; x < size.width; ++x) {
            double max_logit = fused.at(0, x, y);
            for (int c = 1; c < channels; ++c) max_logit = std::max(max_logit, fused.at(c, x, y));
            double sum_exp = 0.0;
            for (int c = 0; c < channels; ++c) {
                probs[c] = std::exp(fused.at(c, x, y) - max_logit);
                sum_exp += probs[c];
            }
            const int label = sample.labels.at(x, y);
            for (int c = 0; c < channels; ++c) {
                const double dz = (probs[c] / sum_exp - (c == label ? 1.0 : 0.0)) * inv_pixels;
                for (int b = 0; b < kBranchCount; ++b) {
                    const double z = sample.stack[b].at(c, x, y);
                    const double w = (c == 0 ? params.branches[b].w_bg : params.branches[b].w_fg);
                    if (c == 0)
                        grads[4 * b + 1] += dz * z / temps[b];
                    else
                        grads[4 * b + 0] += dz * z / temps[b];
                    grads[4 * b + 2] += dz;
                    grads[4 * b + 3] += dz * (-w * z / (temps[b] * temps[b])) * temp_grads[b];
                }
            }
        }
    }
    return grads;
}

struct FusionTrainConfig {
    double lr = 1e-5;
    double weight_decay = 1e-4;
    std::int64_t warmup_steps = 200;
    std::int64_t steps = 2000;  // also the schedule's total_steps
    double clip_norm = 1.0;
};

struct FusionStepDiagnostics {
    double loss = 0.0;
    double clipped_grad_norm = 0.0;
    std::array<double, kBranchCount> temperatures{};
};

struct FusionTrainResult {
    FusionParams params;
    std::vector<double> loss_trace;
    std::vector<FusionStepDiagnostics> diagnostics;
};

/// Sequential training loop over the dataset (samples are cycled in order):
/// fuse, cross-entropy, analytic gradients, global-norm clip, AdamW with the
/// cosine-warmup schedule. Aborts with a NumericalError naming the offending
/// sample if the loss turns non-finite.
inline FusionTrainResult train_fusion(std::span<const FusionSample> dataset, FusionParams init,
                                      const FusionTrainConfig& config) {
    if (dataset.empty()) throw DataError("train_fusion: empty dataset");
    if (config.steps < 0) throw ConfigError("fusion_training.steps must be >= 0");

    const LrSchedule schedule{config.lr, config.warmup_steps, config.steps};
    AdamWState optimizer;
    optimizer.weight_decay = config.weight_decay;

    FusionTrainResult result;
    result.params = init;
    result.loss_trace.reserve(config.steps);
    result.diagnostics.reserve(config.steps);

    auto flat = result.params.flatten();
    for (std::int64_t step = 0; step < config.steps; ++step) {
        const FusionSample& sample = dataset[step % dataset.size()];
        const double loss = fusion_loss(result.params, sample);
        if (!std::isfinite(loss))
            throw NumericalError("train_fusion: non-finite loss at step " + std::to_string(step) +
                                 " (sample " + std::to_string(step % dataset.size()) + ")");
        auto grads = fusion_grad(result.params, sample);
        clip_global_norm(grads, config.clip_norm);

        double clipped_sq = 0.0;
        for (double g : grads) clipped_sq += g * g;

        optimizer.lr = lr_at(schedule, step + 1);
        adamw_step(optimizer, flat, grads);
        result.params = FusionParams::unflatten(flat);

        FusionStepDiagnostics diag;
        diag.loss = loss;
        diag.clipped_grad_norm = std::sqrt(clipped_sq);
        for (int b = 0; b < kBranchCount; ++b)
            diag.temperatures[b] = softplus_temperature(result.params.branches[b].temp_raw);
        result.loss_trace.push_back(loss);
        result.diagnostics.push_back(diag);
    }
    return result;
}

}  // namespace masktrack
