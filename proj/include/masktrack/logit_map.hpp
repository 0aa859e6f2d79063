#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/mask.hpp"

namespace masktrack {

/// Real-valued per-class score grid. Channel 0 is background, channels 1..N
/// are object ids. Storage is channel-major: values[(c*H + y)*W + x].
class LogitMap {
public:
    LogitMap() = default;
    LogitMap(FrameSize size, int channels)
        : size_(size), channels_(channels),
          values_(static_cast<std::size_t>(channels) * size.pixels(), 0.0) {
        if (!size.valid()) throw DataError("LogitMap: frame size must be at least 1x1");
        if (channels < 2) throw DataError("LogitMap: needs background plus at least one object channel");
    }

    FrameSize size() const { return size_; }
    int width() const { return size_.width; }
    int height() const { return size_.height; }
    int channels() const { return channels_; }

    double at(int c, int x, int y) const { return values_[index(c, x, y)]; }
    double& at(int c, int x, int y) { return values_[index(c, x, y)]; }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool operator==(const LogitMap&) const = default;

private:
    std::size_t index(int c, int x, int y) const {
        return (static_cast<std::size_t>(c) * size_.height + y) * size_.width + x;
    }

    FrameSize size_;
    int channels_ = 0;
    std::vector<double> values_;
};

inline bool all_finite(const LogitMap& map) {
    for (double v : map.values())
        if (!std::isfinite(v)) return false;
    return true;
}

/// Per-pixel argmax over channels; ties resolve to the lowest channel index.
inline LabelGrid argmax_labels(const LogitMap& map) {
    LabelGrid grid(map.size());
    for (int y = 0; y < map.height(); ++y) {
        for (int x = 0; x < map.width(); ++x) {
            int best = 0;
            double best_value = map.at(0, x, y);
            for (int c = 1; c < map.channels(); ++c) {
                const double v = map.at(c, x, y);
                if (v > best_value) {
                    best_value = v;
                    best = c;
                }
            }
            grid.set(x, y, static_cast<std::uint8_t>(best));
        }
    }
    return grid;
}

}  // namespace masktrack
