#ifndef DEMS_IMAGE_HPP
#define DEMS_IMAGE_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dems {

// Single-channel float image, row-major, values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return data.size(); }
};

// Binary mask with values in {0, 1}.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return data.size(); }

    std::int64_t foreground_count() const {
        std::int64_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
};

// An image with its aligned mask; the mask is absent for unlabeled samples.
struct SamplePair {
    Image image;
    std::optional<Mask> mask;
    std::string id;
};

inline void require_same_shape(int h1, int w1, int h2, int w2, const char* what) {
    if (h1 != h2 || w1 != w2) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(h1) + "x" + std::to_string(w1) + " vs " +
                                    std::to_string(h2) + "x" + std::to_string(w2) + ")");
    }
}

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace dems

#endif
