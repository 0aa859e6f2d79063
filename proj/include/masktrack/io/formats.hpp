#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "masktrack/error.hpp"
#include "masktrack/logit_map.hpp"
#include "masktrack/mask.hpp"

// On-disk rasters. Both formats are little-endian and fully self-describing:
//
//   label sequence (.mseq):  magic "MSEQv001"
//                            u32 width, height, frames, num_objects
//                            frames * height * width bytes of labels
//                            (row-major within a frame, frames in order)
//
//   logit sequence (.lseq):  magic "LSEQv001"
//                            u32 width, height, frames, channels
//                            per frame, per channel, height * width f32
//
// Writes go through a temp file in the target directory followed by a
// rename.

namespace masktrack::io {

inline constexpr char kMaskMagic[9] = "MSEQv001";
inline constexpr char kLogitMagic[9] = "LSEQv001";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t value) {
    out.push_back(static_cast<char>(value & 0xff));
    out.push_back(static_cast<char>((value >> 8) & 0xff));
    out.push_back(static_cast<char>((value >> 16) & 0xff));
    out.push_back(static_cast<char>((value >> 24) & 0xff));
}

inline void put_f32(std::string& out, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof bits);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(std::string_view data, std::string name) : data_(data), name_(std::move(name)) {}

    std::uint32_t u32(const char* field) {
        if (offset_ + 4 > data_.size())
            throw DataError(name_ + ": truncated while reading header field '" + field + "'");
        std::uint32_t value = 0;
        for (int i = 3; i >= 0; --i)
            value = (value << 8) | static_cast<std::uint8_t>(data_[offset_ + i]);
        offset_ += 4;
        return value;
    }

    float f32() {
        std::uint32_t bits = 0;
        for (int i = 3; i >= 0; --i)
            bits = (bits << 8) | static_cast<std::uint8_t>(data_[offset_ + i]);
        offset_ += 4;
        float value;
        std::memcpy(&value, &bits, sizeof value);
        return value;
    }

    std::uint8_t byte() { return static_cast<std::uint8_t>(data_[offset_++]); }

    void expect_magic(const char* magic) {
        if (data_.size() < 8 || data_.compare(0, 8, magic) != 0)
            throw DataError(name_ + ": bad magic; expected " + magic);
        offset_ = 8;
    }

    void require_payload(std::size_t bytes, const char* what) {
        if (data_.size() - offset_ != bytes)
            throw DataError(name_ + ": " + what + " payload is " +
                            std::to_string(data_.size() - offset_) + " bytes, expected " +
                            std::to_string(bytes));
    }

    const std::string& name() const { return name_; }

private:
    std::string_view data_;
    std::string name_;
    std::size_t offset_ = 0;
};

}  // namespace detail

/// Writes bytes to a temp file next to `path`, then renames it into place.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_mask_sequence(const std::filesystem::path& path, std::span<const LabelGrid> frames,
                                int num_objects) {
    if (frames.empty()) throw DataError("write_mask_sequence: no frames");
    const FrameSize size = frames.front().size();
    std::string out;
    out.reserve(24 + frames.size() * static_cast<std::size_t>(size.pixels()));
    out.append(kMaskMagic, 8);
    detail::put_u32(out, static_cast<std::uint32_t>(size.width));
    detail::put_u32(out, static_cast<std::uint32_t>(size.height));
    detail::put_u32(out, static_cast<std::uint32_t>(frames.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(num_objects));
    for (const LabelGrid& frame : frames) {
        if (frame.size() != size) throw DataError("write_mask_sequence: frame sizes differ");
        for (std::uint8_t label : frame.labels()) {
            if (label > num_objects)
                throw DataError("write_mask_sequence: label exceeds declared object count");
            out.push_back(static_cast<char>(label));
        }
    }
    atomic_write(path, out);
}

struct MaskSequence {
    std::vector<LabelGrid> frames;
    int num_objects = 0;
};

inline MaskSequence read_mask_sequence(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    detail::Reader reader(bytes, path.filename().string());
    reader.expect_magic(kMaskMagic);
    const std::uint32_t width = reader.u32("width");
    const std::uint32_t height = reader.u32("height");
    const std::uint32_t frames = reader.u32("frames");
    const std::uint32_t num_objects = reader.u32("num_objects");
    if (width < 1) throw DataError(reader.name() + ": header field 'width' must be >= 1");
    if (height < 1) throw DataError(reader.name() + ": header field 'height' must be >= 1");
    if (frames < 1) throw DataError(reader.name() + ": header field 'frames' must be >= 1");
    if (num_objects < 1) throw DataError(reader.name() + ": header field 'num_objects' must be >= 1");
    if (num_objects > 255) throw DataError(reader.name() + ": header field 'num_objects' exceeds 255");
    const FrameSize size{static_cast<int>(width), static_cast<int>(height)};
    reader.require_payload(static_cast<std::size_t>(frames) * size.pixels(), "label");

    MaskSequence sequence;
    sequence.num_objects = static_cast<int>(num_objects);
    sequence.frames.reserve(frames);
    for (std::uint32_t t = 0; t < frames; ++t) {
        LabelGrid grid(size);
        for (int y = 0; y < size.height; ++y)
            for (int x = 0; x < size.width; ++x) {
                const std::uint8_t label = reader.byte();
                if (label > num_objects)
                    throw DataError(reader.name() + ": frame " + std::to_string(t) +
                                    " has label " + std::to_string(label) +
                                    " above num_objects " + std::to_string(num_objects));
                grid.set(x, y, label);
            }
        sequence.frames.push_back(std::move(grid));
    }
    return sequence;
}

inline void write_logit_sequence(const std::filesystem::path& path, std::span<const LogitMap> frames) {
    if (frames.empty()) throw DataError("write_logit_sequence: no frames");
    const FrameSize size = frames.front().size();
    const int channels = frames.front().channels();
    std::string out;
    out.reserve(24 + frames.size() * static_cast<std::size_t>(channels) * size.pixels() * 4);
    out.append(kLogitMagic, 8);
    detail::put_u32(out, static_cast<std::uint32_t>(size.width));
    detail::put_u32(out, static_cast<std::uint32_t>(size.height));
    detail::put_u32(out, static_cast<std::uint32_t>(frames.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(channels));
    for (const LogitMap& frame : frames) {
        if (frame.size() != size || frame.channels() != channels)
            throw DataError("write_logit_sequence: frame shapes differ");
        for (double value : frame.values()) detail::put_f32(out, static_cast<float>(value));
    }
    atomic_write(path, out);
}

/// Reads a logit sequence. With `synthesize_background` the file is treated
/// as foreground-only and a background channel is prepended as the negated
/// per-pixel maximum over the foreground channels (for externally produced
/// stacks that carry no background score).
inline std::vector<LogitMap> read_logit_sequence(const std::filesystem::path& path,
                                                 bool synthesize_background = false) {
    const std::string bytes = read_file(path);
    detail::Reader reader(bytes, path.filename().string());
    reader.expect_magic(kLogitMagic);
    const std::uint32_t width = reader.u32("width");
    const std::uint32_t height = reader.u32("height");
    const std::uint32_t frames = reader.u32("frames");
    const std::uint32_t channels = reader.u32("channels");
    if (width < 1) throw DataError(reader.name() + ": header field 'width' must be >= 1");
    if (height < 1) throw DataError(reader.name() + ": header field 'height' must be >= 1");
    if (frames < 1) throw DataError(reader.name() + ": header field 'frames' must be >= 1");
    const std::uint32_t min_channels = synthesize_background ? 1 : 2;
    if (channels < min_channels)
        throw DataError(reader.name() + ": header field 'channels' must be >= " +
                        std::to_string(min_channels));
    const FrameSize size{static_cast<int>(width), static_cast<int>(height)};
    reader.require_payload(static_cast<std::size_t>(frames) * channels * size.pixels() * 4, "logit");

    std::vector<LogitMap> maps;
    maps.reserve(frames);
    const int out_channels = synthesize_background ? static_cast<int>(channels) + 1
                                                   : static_cast<int>(channels);
    for (std::uint32_t t = 0; t < frames; ++t) {
        LogitMap map(size, out_channels);
        const int first = synthesize_background ? 1 : 0;
        for (std::uint32_t c = 0; c < channels; ++c)
            for (int y = 0; y < size.height; ++y)
                for (int x = 0; x < size.width; ++x) {
                    const float value = reader.f32();
                    if (!std::isfinite(value))
                        throw DataError(reader.name() + ": non-finite logit in frame " +
                                        std::to_string(t));
                    map.at(first + static_cast<int>(c), x, y) = value;
                }
        if (synthesize_background) {
            for (int y = 0; y < size.height; ++y)
                for (int x = 0; x < size.width; ++x) {
                    double max_fg = map.at(1, x, y);
                    for (int c = 2; c < out_channels; ++c)
                        max_fg = std::max(max_fg, map.at(c, x, y));
                    map.at(0, x, y) = -max_fg;
                }
        }
        maps.push_back(std::move(map));
    }
    return maps;
}

}  // namespace masktrack::io
