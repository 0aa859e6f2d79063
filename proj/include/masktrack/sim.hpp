#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/logit_map.hpp"
#include "masktrack/mask.hpp"
#include "masktrack/metrics.hpp"
#include "masktrack/motion.hpp"
#include "masktrack/rng.hpp"

namespace masktrack::sim {

enum class ShapeKind { rectangle, ellipse };

struct ShapeSpec {
    ShapeKind kind = ShapeKind::rectangle;
    double width_px = 1.0;
    double height_px = 1.0;
};

struct Waypoint {
    int frame = 0;
    NormalizedPoint center;
};

/// Half-open frame interval [begin, end).
struct OcclusionInterval {
    int begin = 0;
    int end = 0;
};

struct ObjectScript {
    int id = 0;
    ShapeSpec shape;
    std::vector<Waypoint> waypoints;         // sorted by frame
    std::vector<OcclusionInterval> occlusions;  // disjoint, sorted
};

/// Corruption model for one synthetic logit provider. Dropout suppresses an
/// object's channel to background level for a whole frame. The distractor
/// rule copies another object's blob onto this object's channel (scaled by
/// distractor_gain times the margin) whenever the two objects' centroids come
/// within distractor_radius, standing in for identity confusion between
/// visually similar instances.
struct BranchProfile {
    double noise_std = 0.0;
    double dropout_prob = 0.0;
    double distractor_gain = 0.0;
    double distractor_radius = 0.15;  // normalized centroid distance
    double margin = 4.0;              // clean logit gap is 2 * margin
};

struct Scenario {
    FrameSize size;
    int frames = 0;
    std::uint64_t seed = 0;
    std::vector<ObjectScript> objects;
    std::array<BranchProfile, 4> branches{};
};

inline int num_objects(const Scenario& scenario) { return static_cast<int>(scenario.objects.size()); }

inline bool occluded(const ObjectScript& script, int frame) {
    for (const auto& interval : script.occlusions)
        if (frame >= interval.begin && frame < interval.end) return true;
    return false;
}

inline void validate(const Scenario& scenario) {
    if (!scenario.size.valid()) throw ConfigError("scenario.size must be at least 1x1");
    if (scenario.frames < 1) throw ConfigError("scenario.frames must be >= 1");
    if (scenario.objects.empty()) throw ConfigError("scenario.objects must be nonempty");

    std::vector<int> ids;
    for (const auto& object : scenario.objects) ids.push_back(object.id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] != static_cast<int>(i) + 1)
            throw ConfigError("scenario.objects ids must be exactly 1..N");

    for (const auto& object : scenario.objects) {
        const std::string prefix = "scenario.objects[id " + std::to_string(object.id) + "]";
        if (object.shape.width_px < 1.0 || object.shape.height_px < 1.0)
            throw ConfigError(prefix + ".shape extent must be at least one pixel");
        if (object.waypoints.empty()) throw ConfigError(prefix + ".waypoints must be nonempty");
        for (std::size_t i = 0; i < object.waypoints.size(); ++i) {
            const auto& wp = object.waypoints[i];
            if (wp.center.x < 0.0 || wp.center.x > 1.0 || wp.center.y < 0.0 || wp.center.y > 1.0)
                throw ConfigError(prefix + ".waypoints centers must lie in [0,1]^2");
            if (i > 0 && object.waypoints[i - 1].frame >= wp.frame)
                throw ConfigError(prefix + ".waypoints must be strictly sorted by frame");
        }
        for (std::size_t i = 0; i < object.occlusions.size(); ++i) {
            const auto& interval = object.occlusions[i];
            if (interval.begin < 0 || interval.end <= interval.begin)
                throw ConfigError(prefix + ".occlusions intervals must satisfy 0 <= begin < end");
            if (i > 0 && object.occlusions[i - 1].end > interval.begin)
                throw ConfigError(prefix + ".occlusions intervals must be disjoint and sorted");
        }
        if (occluded(object, 0))
            throw ConfigError(prefix + " may not be occluded in frame 0 (needed for initialization)");
    }
    for (std::size_t b = 0; b < scenario.branches.size(); ++b) {
        const auto& profile = scenario.branches[b];
        const std::string prefix = "scenario.branches[" + std::to_string(b) + "]";
        if (profile.noise_std < 0.0) throw ConfigError(prefix + ".noise_std must be >= 0");
        if (profile.dropout_prob < 0.0 || profile.dropout_prob > 1.0)
            throw ConfigError(prefix + ".dropout_prob must be in [0,1]");
        if (profile.distractor_gain < 0.0) throw ConfigError(prefix + ".distractor_gain must be >= 0");
        if (profile.distractor_radius < 0.0) throw ConfigError(prefix + ".distractor_radius must be >= 0");
        if (profile.margin <= 0.0) throw ConfigError(prefix + ".margin must be > 0");
    }
}

/// Piecewise-linear interpolation of the waypoint track; clamped to the
/// first/last waypoint outside their frame range.
inline NormalizedPoint scripted_center(const ObjectScript& script, int frame) {
    const auto& wps = script.waypoints;
    if (frame <= wps.front().frame) return wps.front().center;
    if (frame >= wps.back().frame) return wps.back().center;
    for (std::size_t i = 1; i < wps.size(); ++i) {
        if (frame <= wps[i].frame) {
            const auto& a = wps[i - 1];
            const auto& b = wps[i];
            const double u = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
            return NormalizedPoint{a.center.x + u * (b.center.x - a.center.x),
                                   a.center.y + u * (b.center.y - a.center.y)};
        }
    }
    return wps.back().center;
}

namespace detail {
inline bool inside_shape(const ShapeSpec& shape, double dx, double dy) {
    const double hw = shape.width_px / 2.0;
    const double hh = shape.height_px / 2.0;
    if (shape.kind == ShapeKind::rectangle) return std::abs(dx) <= hw && std::abs(dy) <= hh;
    const double nx = dx / hw;
    const double ny = dy / hh;
    return nx * nx + ny * ny <= 1.0;
}
}  // namespace detail

/// Rasterizes every visible object at its interpolated center, painting in
/// ascending id order so higher ids sit on top where objects overlap.
/// Per-object masks are recovered with object_mask(grid, id).
inline LabelGrid render_gt(const Scenario& scenario, int frame) {
    if (frame < 0 || frame >= scenario.frames) throw DataError("render_gt: frame out of range");
    LabelGrid grid(scenario.size);
    std::vector<const ObjectScript*> order;
    for (const auto& object : scenario.objects) order.push_back(&object);
    std::sort(order.begin(), order.end(),
              [](const ObjectScript* a, const ObjectScript* b) { return a->id < b->id; });

    for (const ObjectScript* object : order) {
        if (occluded(*object, frame)) continue;
        const NormalizedPoint center = scripted_center(*object, frame);
        const double px = center.x * scenario.size.width;
        const double py = center.y * scenario.size.height;
        for (int y = 0; y < scenario.size.height; ++y) {
            for (int x = 0; x < scenario.size.width; ++x) {
                if (detail::inside_shape(object->shape, x + 0.5 - px, y + 0.5 - py))
                    grid.set(x, y, static_cast<std::uint8_t>(object->id));
            }
        }
    }
    return grid;
}

/// Seed for one (branch, frame) logit draw.
inline std::uint64_t branch_frame_seed(std::uint64_t scenario_seed, int branch, int frame) {
    return mix_seed(mix_seed(scenario_seed, static_cast<std::uint64_t>(branch)),
                    static_cast<std::uint64_t>(frame) + 0x100);
}

/// Margin logits from a label grid plus the profile's corruptions, applied
/// in a fixed order (dropout, distractor, noise) for reproducibility.
inline LogitMap synth_logits(const LabelGrid& gt, int num_objects, const BranchProfile& profile,
                             std::uint64_t seed) {
    const FrameSize size = gt.size();
    LogitMap logits(size, num_objects + 1);
    GaussianRng rng(seed);

    for (int y = 0; y < size.height; ++y)
        for (int x = 0; x < size.width; ++x) {
            const int label = gt.at(x, y);
            for (int c = 0; c <= num_objects; ++c)
                logits.at(c, x, y) = (c == label ? profile.margin : -profile.margin);
        }

    // Dropout: one decision per object, suppressing its channel for the frame.
    for (int id = 1; id <= num_objects; ++id) {
        const bool drop = rng.bernoulli(profile.dropout_prob);
        if (!drop) continue;
        for (int y = 0; y < size.height; ++y)
            for (int x = 0; x < size.width; ++x) logits.at(id, x, y) = -profile.margin;
    }

    // Distractor: when two objects come close, each one's blob bleeds onto the
    // other's channel.
    if (profile.distractor_gain > 0.0 && num_objects >= 2) {
        std::vector<std::optional<NormalizedPoint>> centers(num_objects + 1);
        for (int id = 1; id <= num_objects; ++id) centers[id] = centroid(object_mask(gt, id));
        for (int a = 1; a <= num_objects; ++a) {
            for (int b = 1; b <= num_objects; ++b) {
                if (a == b || !centers[a] || !centers[b]) continue;
                const double dx = centers[a]->x - centers[b]->x;
                const double dy = centers[a]->y - centers[b]->y;
                if (std::sqrt(dx * dx + dy * dy) >= profile.distractor_radius) continue;
                const double bump = profile.distractor_gain * profile.margin;
                for (int y = 0; y < size.height; ++y)
                    for (int x = 0; x < size.width; ++x)
                        if (gt.at(x, y) == b) logits.at(a, x, y) += bump;
            }
        }
    }

    if (profile.noise_std > 0.0)
        for (double& v : logits.values()) v += profile.noise_std * rng.gaussian();
    return logits;
}

struct TrackOptions {
    bool motion_prior = true;  // blend Gaussian priors into the logits
    int source_branch = 2;     // which synthetic provider feeds the tracker
    bool adapt = false;        // online adaptation of (beta, sigma_scale)
    int adapt_steps_per_frame = 5;
    double adapt_lr = 1e-4;
    double adapt_weight_decay = 1e-6;
    double adapt_clip_norm = 1.0;
    double tolerance = -1.0;  // boundary tolerance in pixels; < 0 uses the frame default
};

struct ObjectTrace {
    int id = 0;
    KinematicState state;
    bool observed = false;
};

struct TrackResult {
    std::vector<LabelGrid> predictions;
    std::vector<std::vector<ObjectTrace>> trace;  // [frame][object index]
    MetricReport report;
    MotionConfig final_config;  // reflects online adaptation when enabled
};

/// Frame loop over precomputed logits: argmax the raw logits for the state
/// observations, fold in the Gaussian priors when the motion prior is on,
/// and score the emitted masks against the ground truth. Frame 0 is the
/// annotation: states initialize from it and it is echoed as the prediction.
inline TrackResult track_sequence(std::span<const LogitMap> logits, std::span<const LabelGrid> gt,
                                  int num_objects, const MotionConfig& base_config,
                                  const TrackOptions& options) {
    if (gt.empty()) throw DataError("track_sequence: no frames");
    if (logits.size() != gt.size())
        throw DataError("track_sequence: logit and ground-truth frame counts differ");
    validate(base_config);
    const FrameSize size = gt.front().size();
    for (std::size_t t = 0; t < gt.size(); ++t) {
        if (gt[t].size() != size) throw DataError("track_sequence: ground-truth frame sizes differ");
        if (logits[t].size() != size)
            throw DataError("track_sequence: logit frame size does not match ground truth");
        if (logits[t].channels() != num_objects + 1)
            throw DataError("track_sequence: logit channel count does not match object count");
    }

    MotionConfig config = base_config;
    AdamWState adapt_optimizer;
    adapt_optimizer.lr = options.adapt_lr;
    adapt_optimizer.weight_decay = options.adapt_weight_decay;

    std::vector<KinematicState> states;
    std::vector<ObjectTrace> first_row;
    for (int id = 1; id <= num_objects; ++id) {
        const BinaryMask annotation = object_mask(gt.front(), id);
        if (mask_area(annotation) == 0)
            throw DataError("track_sequence: object " + std::to_string(id) +
                            " has an empty mask in the first frame");
        states.push_back(init_state(annotation));
        first_row.push_back(ObjectTrace{id, states.back(), true});
    }

    TrackResult result;
    result.predictions.push_back(gt.front());
    result.trace.push_back(std::move(first_row));

    for (std::size_t t = 1; t < gt.size(); ++t) {
        const LogitMap& raw = logits[t];
        const LabelGrid raw_labels = argmax_labels(raw);

        std::vector<ObjectTrace> row;
        for (int i = 0; i < num_objects; ++i) {
            const BinaryMask observation = object_mask(raw_labels, i + 1);
            states[i] = observe(states[i], &observation, size, config);
            row.push_back(ObjectTrace{i + 1, states[i], states[i].frames_since_observation == 0});
        }

        if (options.motion_prior) {
            std::vector<GaussianPrior> priors;
            priors.reserve(states.size());
            for (const auto& state : states) priors.push_back(gaussian_prior(state, size, config));
            result.predictions.push_back(argmax_labels(blend_logits(raw, priors, config)));
            if (options.adapt)
                adapt_frame(config, adapt_optimizer, raw, states, gt[t],
                            options.adapt_steps_per_frame, options.adapt_clip_norm);
        } else {
            result.predictions.push_back(raw_labels);
        }
        result.trace.push_back(std::move(row));
    }

    const double tolerance =
        options.tolerance < 0.0 ? default_boundary_tolerance(size) : options.tolerance;
    result.report = evaluate_sequence(result.predictions, gt, num_objects, tolerance);
    result.final_config = config;
    return result;
}

/// Renders the scenario, synthesizes the tracked branch's logits and runs
/// the frame loop.
inline TrackResult run_tracking(const Scenario& scenario, const MotionConfig& config,
                                const TrackOptions& options) {
    validate(scenario);
    if (options.source_branch < 0 || options.source_branch >= static_cast<int>(scenario.branches.size()))
        throw ConfigError("track.branch must be in 0..3");

    std::vector<LabelGrid> gt;
    std::vector<LogitMap> logits;
    gt.reserve(scenario.frames);
    logits.reserve(scenario.frames);
    const BranchProfile& profile = scenario.branches[options.source_branch];
    for (int t = 0; t < scenario.frames; ++t) {
        gt.push_back(render_gt(scenario, t));
        logits.push_back(synth_logits(gt.back(), num_objects(scenario), profile,
                                      branch_frame_seed(scenario.seed, options.source_branch, t)));
    }
    return track_sequence(logits, gt, num_objects(scenario), config, options);
}

}  // namespace masktrack::sim
