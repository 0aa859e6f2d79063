#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "masktrack/error.hpp"

namespace masktrack {

/// Frame dimensions in pixels. x runs along columns (width), y along rows
/// (height). Pixel (i, j) covers the unit square [i, i+1) x [j, j+1); its
/// center in normalized coordinates is ((i + 0.5) / W, (j + 0.5) / H), so a
/// full-frame mask has centroid exactly (0.5, 0.5).
struct FrameSize {
    int width = 0;
    int height = 0;

    bool operator==(const FrameSize&) const = default;
    std::int64_t pixels() const { return static_cast<std::int64_t>(width) * height; }
    bool valid() const { return width >= 1 && height >= 1; }
};

/// Point in normalized image coordinates, both components in [0, 1].
struct NormalizedPoint {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const NormalizedPoint&) const = default;
};

/// Bounding-box extent as a fraction of frame size, components in (0, 1]
/// when derived from a nonempty mask.
struct NormalizedExtent {
    double w = 0.0;
    double h = 0.0;

    bool operator==(const NormalizedExtent&) const = default;
};

/// Per-object, per-frame raster of {0, 1}, row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    explicit BinaryMask(FrameSize size, bool fill = false)
        : size_(size), bits_(static_cast<std::size_t>(size.pixels()), fill ? 1 : 0) {
        if (!size.valid()) throw DataError("BinaryMask: frame size must be at least 1x1");
    }

    FrameSize size() const { return size_; }
    int width() const { return size_.width; }
    int height() const { return size_.height; }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool value) { bits_[index(x, y)] = value ? 1 : 0; }

    const std::vector<std::uint8_t>& bits() const { return bits_; }

    bool operator==(const BinaryMask&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * size_.width + x;
    }

    FrameSize size_;
    std::vector<std::uint8_t> bits_;
};

/// Multi-class label raster: 0 is background, 1..N are object ids.
class LabelGrid {
public:
    LabelGrid() = default;
    explicit LabelGrid(FrameSize size) : size_(size), labels_(static_cast<std::size_t>(size.pixels()), 0) {
        if (!size.valid()) throw DataError("LabelGrid: frame size must be at least 1x1");
    }

    FrameSize size() const { return size_; }
    int width() const { return size_.width; }
    int height() const { return size_.height; }

    std::uint8_t at(int x, int y) const { return labels_[index(x, y)]; }
    void set(int x, int y, std::uint8_t label) { labels_[index(x, y)] = label; }

    const std::vector<std::uint8_t>& labels() const { return labels_; }
    std::vector<std::uint8_t>& labels() { return labels_; }

    bool operator==(const LabelGrid&) const = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * size_.width + x;
    }

    FrameSize size_;
    std::vector<std::uint8_t> labels_;
};

/// Binary mask of the pixels carrying a given object id.
inline BinaryMask object_mask(const LabelGrid& grid, int id) {
    BinaryMask mask(grid.size());
    for (int y = 0; y < grid.height(); ++y)
        for (int x = 0; x < grid.width(); ++x)
            if (grid.at(x, y) == id) mask.set(x, y, true);
    return mask;
}

/// Count of set pixels.
inline std::int64_t mask_area(const BinaryMask& mask) {
    std::int64_t count = 0;
    for (std::uint8_t bit : mask.bits()) count += bit;
    return count;
}

/// Mean of pixel-center coordinates of set pixels, normalized by frame size.
/// Empty mask yields nullopt; callers decide how to extrapolate.
inline std::optional<NormalizedPoint> centroid(const BinaryMask& mask) {
    double sum_x = 0.0;
    double sum_y = 0.0;
    std::int64_t count = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            sum_x += x + 0.5;
            sum_y += y + 0.5;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return NormalizedPoint{sum_x / count / mask.width(), sum_y / count / mask.height()};
}

/// Tight bounding-box extent (max - min + 1 per axis) normalized by frame
/// size. Empty mask yields nullopt.
inline std::optional<NormalizedExtent> extent(const BinaryMask& mask) {
    int min_x = mask.width();
    int max_x = -1;
    int min_y = mask.height();
    int max_y = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            if (x < min_x) min_x = x;
            if (x > max_x) max_x = x;
            if (y < min_y) min_y = y;
            if (y > max_y) max_y = y;
        }
    }
    if (max_x < 0) return std::nullopt;
    return NormalizedExtent{static_cast<double>(max_x - min_x + 1) / mask.width(),
                            static_cast<double>(max_y - min_y + 1) / mask.height()};
}

}  // namespace masktrack
