#ifndef GEOSEG_RASTER_IO_HPP
#define GEOSEG_RASTER_IO_HPP

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg {

/// Interleaved 8-bit pixels as stored on disk.
struct RawImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;  // row-major, channel-interleaved

    std::uint8_t at(std::size_t r, std::size_t c, std::size_t ch) const {
        return pixels[(r * width + c) * channels + ch];
    }
    friend bool operator==(const RawImage&, const RawImage&) = default;
};

namespace detail {

inline std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext;
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- PNG (libpng simplified API) ----

inline RawImage read_png(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw DataError("corrupt PNG '" + path.string() + "': " + image.message);
    // Keep colour/alpha layout, drop to 8-bit non-linear samples.
    image.format &= (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA);
    RawImage raw;
    raw.height = image.height;
    raw.width = image.width;
    raw.channels = PNG_IMAGE_SAMPLE_CHANNELS(image.format);
    raw.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, raw.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw DataError("corrupt PNG '" + path.string() + "': " + msg);
    }
    return raw;
}

inline void write_png(const RawImage& raw, const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(raw.width);
    image.height = static_cast<png_uint_32>(raw.height);
    switch (raw.channels) {
        case 1: image.format = PNG_FORMAT_GRAY; break;
        case 2: image.format = PNG_FORMAT_GA; break;
        case 3: image.format = PNG_FORMAT_RGB; break;
        case 4: image.format = PNG_FORMAT_RGBA; break;
        default: throw ConfigError("PNG supports 1-4 channels");
    }
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, raw.pixels.data(), 0, nullptr))
        throw DataError("cannot write PNG '" + path.string() + "': " + image.message);
}

// ---- TIFF: baseline, uncompressed, chunky, 8 bits/sample, one strip ----

class TiffCursor {
public:
    TiffCursor(const std::vector<std::uint8_t>& bytes, const std::string& name) : bytes_(bytes), name_(name) {
        if (bytes.size() < 8) fail("file too short");
        if (bytes[0] == 'I' && bytes[1] == 'I') little_ = true;
        else if (bytes[0] == 'M' && bytes[1] == 'M') little_ = false;
        else fail("bad byte-order mark");
        if (u16(2) != 42) fail("bad magic number");
    }

    std::uint16_t u16(std::size_t off) const {
        need(off, 2);
        return little_ ? static_cast<std::uint16_t>(bytes_[off] | bytes_[off + 1] << 8)
                       : static_cast<std::uint16_t>(bytes_[off] << 8 | bytes_[off + 1]);
    }
    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint32_t b = bytes_[off + (little_ ? i : 3 - i)];
            v |= b << (8 * i);
        }
        return v;
    }
    void need(std::size_t off, std::size_t n) const {
        if (off + n > bytes_.size()) fail("truncated");
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw DataError("corrupt TIFF '" + name_ + "': " + why);
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string name_;
    bool little_ = true;
};

inline RawImage read_tiff(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const TiffCursor cur(bytes, path.string());
    const std::uint32_t ifd = cur.u32(4);
    const std::uint16_t count = cur.u16(ifd);

    std::uint32_t width = 0, height = 0, samples = 1, compression = 1, planar = 1;
    std::uint32_t strip_offset = 0, strip_bytes = 0, strip_count = 0, rows_per_strip = UINT32_MAX;
    std::vector<std::uint16_t> bits;
    for (std::uint16_t i = 0; i < count; ++i) {
        const std::size_t entry = ifd + 2 + 12 * static_cast<std::size_t>(i);
        const std::uint16_t tag = cur.u16(entry);
        const std::uint16_t type = cur.u16(entry + 2);
        const std::uint32_t n = cur.u32(entry + 4);
        auto scalar = [&]() -> std::uint32_t { return type == 3 ? cur.u16(entry + 8) : cur.u32(entry + 8); };
        switch (tag) {
            case 256: width = scalar(); break;
            case 257: height = scalar(); break;
            case 258: {
                const std::size_t base = n * 2 > 4 ? cur.u32(entry + 8) : entry + 8;
                for (std::uint32_t k = 0; k < n; ++k) bits.push_back(cur.u16(base + 2 * k));
                break;
            }
            case 259: compression = scalar(); break;
            case 273: strip_count = n; strip_offset = n == 1 ? scalar() : 0; break;
            case 277: samples = scalar(); break;
            case 278: rows_per_strip = scalar(); break;
            case 279: strip_bytes = n == 1 ? scalar() : 0; break;
            case 284: planar = scalar(); break;
            default: break;
        }
    }
    if (width == 0 || height == 0) cur.fail("missing dimensions");
    if (compression != 1) cur.fail("only uncompressed TIFF is supported");
    if (planar != 1) cur.fail("only chunky planar configuration is supported");
    if (strip_count != 1 || rows_per_strip < height) cur.fail("only single-strip TIFF is supported");
    for (auto b : bits)
        if (b != 8) cur.fail("only 8 bits per sample is supported");

    RawImage raw;
    raw.width = width;
    raw.height = height;
    raw.channels = samples;
    const std::size_t expected = static_cast<std::size_t>(width) * height * samples;
    if (strip_bytes != 0 && strip_bytes < expected) cur.fail("strip shorter than image");
    cur.need(strip_offset, expected);
    raw.pixels.assign(bytes.begin() + strip_offset, bytes.begin() + strip_offset + static_cast<std::ptrdiff_t>(expected));
    return raw;
}

inline void write_tiff(const RawImage& raw, const std::filesystem::path& path) {
    if (raw.channels != 1 && raw.channels != 3) throw ConfigError("TIFF writer supports 1 or 3 channels");
    std::vector<std::uint8_t> out;
    auto put16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    struct Entry {
        std::uint16_t tag, type;
        std::uint32_t count, value;
    };
    const auto samples = static_cast<std::uint16_t>(raw.channels);
    const std::uint16_t n_entries = 10;
    const std::uint32_t ifd_offset = 8;
    const std::uint32_t ifd_size = 2 + 12u * n_entries + 4;
    const std::uint32_t bits_offset = ifd_offset + ifd_size;  // 3 x u16 for RGB
    const std::uint32_t data_offset = bits_offset + (samples == 3 ? 6 : 0);
    const auto data_size = static_cast<std::uint32_t>(raw.pixels.size());

    const std::array<Entry, n_entries> entries{{
        {256, 4, 1, static_cast<std::uint32_t>(raw.width)},
        {257, 4, 1, static_cast<std::uint32_t>(raw.height)},
        {258, 3, samples, samples == 3 ? bits_offset : 8u},
        {259, 3, 1, 1},
        {262, 3, 1, samples == 3 ? 2u : 1u},
        {273, 4, 1, data_offset},
        {277, 3, 1, samples},
        {278, 4, 1, static_cast<std::uint32_t>(raw.height)},
        {279, 4, 1, data_size},
        {284, 3, 1, 1},
    }};

    out.insert(out.end(), {'I', 'I'});
    put16(42);
    put32(ifd_offset);
    put16(n_entries);
    for (const auto& e : entries) {
        put16(e.tag);
        put16(e.type);
        put32(e.count);
        if (e.type == 3 && e.count == 1) {
            put16(static_cast<std::uint16_t>(e.value));
            put16(0);
        } else {
            put32(e.value);
        }
    }
    put32(0);
    if (samples == 3) {
        put16(8);
        put16(8);
        put16(8);
    }
    out.insert(out.end(), raw.pixels.begin(), raw.pixels.end());

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write TIFF '" + path.string() + "'");
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) throw DataError("cannot write TIFF '" + path.string() + "'");
}

inline std::uint8_t quantize(double v, const ValueRange& range) {
    double scaled;
    if (range.degenerate()) scaled = 127.5;
    else scaled = (v - range.min) * 255.0 / (range.max - range.min);
    const double q = std::round(scaled);
    // Allow rounding noise at the ends, reject genuine out-of-range data.
    if (!(q >= -0.5 && q <= 255.5)) throw ConfigError("save_raster: value outside declared range");
    return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

}  // namespace detail

/// Read a PNG or TIFF by extension.
inline RawImage read_raw(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("missing file '" + path.string() + "'");
    const auto ext = detail::lower_extension(path);
    if (ext == ".png") return detail::read_png(path);
    if (ext == ".tif" || ext == ".tiff") return detail::read_tiff(path);
    throw DataError("unsupported raster format '" + path.string() + "'");
}

inline void write_raw(const RawImage& raw, const std::filesystem::path& path) {
    if (raw.pixels.size() != raw.height * raw.width * raw.channels)
        throw ConfigError("raw image buffer does not match its shape");
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    const auto ext = detail::lower_extension(path);
    if (ext == ".png") return detail::write_png(raw, path);
    if (ext == ".tif" || ext == ".tiff") return detail::write_tiff(raw, path);
    throw ConfigError("unsupported raster format '" + path.string() + "'");
}

/// Load an 8-bit raster as a tile with byte-range bands.
inline Tile load_tile(const std::filesystem::path& path, std::size_t expected_bands = 3) {
    const RawImage raw = read_raw(path);
    if (raw.channels != expected_bands)
        throw DataError("'" + path.string() + "' has " + std::to_string(raw.channels) + " bands, expected " +
                        std::to_string(expected_bands));
    static const char* const kRgbNames[] = {"R", "G", "B"};
    std::vector<Band> bands;
    for (std::size_t ch = 0; ch < raw.channels; ++ch) {
        Grid<double> grid(raw.height, raw.width);
        for (std::size_t r = 0; r < raw.height; ++r)
            for (std::size_t c = 0; c < raw.width; ++c) grid(r, c) = raw.at(r, c, ch);
        std::string name = raw.channels == 3 ? kRgbNames[ch] : (raw.channels == 1 ? "GRAY" : "B" + std::to_string(ch));
        bands.emplace_back(std::move(grid), kByteRange, std::move(name));
    }
    Tile tile(std::move(bands));
    tile.source_id = path.stem().string();
    return tile;
}

/// Load a single-band {0,255} raster; values above 127 are buildings.
inline MaskTile load_mask(const std::filesystem::path& path) {
    const RawImage raw = read_raw(path);
    if (raw.channels != 1) throw DataError("mask '" + path.string() + "' must be single-band");
    Grid<std::uint8_t> grid(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) grid.values()[i] = raw.pixels[i] > 127 ? 1 : 0;
    return MaskTile(std::move(grid));
}

/// Quantise a band's declared range to 8 bits and write it.
inline void save_raster(const Band& band, const std::filesystem::path& path) {
    RawImage raw{band.height(), band.width(), 1, {}};
    raw.pixels.reserve(band.data.size());
    for (double v : band.data) raw.pixels.push_back(detail::quantize(v, band.range));
    write_raw(raw, path);
}

/// Write a 1- or 3-band tile, each band quantised from its declared range.
inline void save_raster(const Tile& tile, const std::filesystem::path& path) {
    if (tile.band_count() == 1) return save_raster(tile.bands.front(), path);
    if (tile.band_count() != 3) throw ConfigError("save_raster writes 1- or 3-band tiles");
    RawImage raw{tile.height(), tile.width(), 3, {}};
    raw.pixels.resize(raw.height * raw.width * 3);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const Band& b = tile.bands[ch];
        auto vals = b.data.values();
        for (std::size_t i = 0; i < vals.size(); ++i) raw.pixels[i * 3 + ch] = detail::quantize(vals[i], b.range);
    }
    write_raw(raw, path);
}

inline void save_mask(const MaskTile& mask, const std::filesystem::path& path) {
    RawImage raw{mask.height(), mask.width(), 1, {}};
    raw.pixels.reserve(mask.size());
    for (auto v : mask.data()) raw.pixels.push_back(v ? 255 : 0);
    write_raw(raw, path);
}

}  // namespace geoseg

#endif  // GEOSEG_RASTER_IO_HPP
