#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlosslab {

/// Row-major 2-D grid. Pixel (x, y) lives at index y * width + x.
template <typename T>
struct Grid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), data(w * h, fill) {}

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    T& operator()(std::size_t x, std::size_t y) { return data[y * width + x]; }
    const T& operator()(std::size_t x, std::size_t y) const { return data[y * width + x]; }

    bool same_shape(const Grid& other) const { return width == other.width && height == other.height; }

    template <typename U>
    bool same_shape(const Grid<U>& other) const {
        return width == other.width && height == other.height;
    }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Binary label grid; every entry is 0 or 1.
using Mask = Grid<std::uint8_t>;
using ProbGrid = Grid<double>;

inline std::size_t area(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.data) n += v;
    return n;
}

inline Mask complement(const Mask& m) {
    Mask out = m;
    for (auto& v : out.data) v = static_cast<std::uint8_t>(1 - v);
    return out;
}

inline void validate_mask(const Mask& m) {
    if (m.width == 0 || m.height == 0) throw std::invalid_argument("mask dimensions must be >= 1");
    if (m.data.size() != m.width * m.height) throw std::invalid_argument("mask storage does not match its dimensions");
    for (auto v : m.data)
        if (v > 1) throw std::invalid_argument("mask values must be 0 or 1, got " + std::to_string(int(v)));
}

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.width) + "x" +
                                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                    std::to_string(b.height) + ")");
}

}  // namespace tlosslab
