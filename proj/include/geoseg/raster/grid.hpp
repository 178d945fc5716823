#ifndef GEOSEG_RASTER_GRID_HPP
#define GEOSEG_RASTER_GRID_HPP

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "geoseg/core/error.hpp"

namespace geoseg {

/// Row-major H x W grid of values.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;

    Grid(std::size_t height, std::size_t width, T fill = T{})
        : height_(height), width_(width), data_(height * width, fill) {
        if (height == 0 || width == 0) throw ConfigError("grid dimensions must be positive");
    }

    Grid(std::size_t height, std::size_t width, std::vector<T> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height == 0 || width == 0) throw ConfigError("grid dimensions must be positive");
        if (data_.size() != height * width) throw ConfigError("grid data size does not match dimensions");
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t row, std::size_t col) noexcept {
        assert(row < height_ && col < width_);
        return data_[row * width_ + col];
    }
    const T& operator()(std::size_t row, std::size_t col) const noexcept {
        assert(row < height_ && col < width_);
        return data_[row * width_ + col];
    }

    /// Access with edge replication for out-of-range coordinates.
    const T& clamped(std::ptrdiff_t row, std::ptrdiff_t col) const noexcept {
        const auto h = static_cast<std::ptrdiff_t>(height_);
        const auto w = static_cast<std::ptrdiff_t>(width_);
        row = row < 0 ? 0 : (row >= h ? h - 1 : row);
        col = col < 0 ? 0 : (col >= w ? w - 1 : col);
        return data_[static_cast<std::size_t>(row) * width_ + static_cast<std::size_t>(col)];
    }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool same_shape(const auto& other) const noexcept {
        return height_ == other.height() && width_ == other.width();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<T> data_;
};

}  // namespace geoseg

#endif  // GEOSEG_RASTER_GRID_HPP
