// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace caicl {

/// Encoded image bytes (PNG) plus dimensions.
struct ImageBlob {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> png;

    friend bool operator==(const ImageBlob&, const ImageBlob&) = default;
};

/// 8-bit RGB raster, row-major.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Raster() = default;
    Raster(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h), rgb(std::size_t(w) * h * 3)
    {
        for (std::size_t i = 0; i < rgb.size(); i += 3) {
            rgb[i] = fill[0];
            rgb[i + 1] = fill[1];
            rgb[i + 2] = fill[2];
        }
    }

    std::uint8_t* at(int x, int y) { return &rgb[(std::size_t(y) * width + x) * 3]; }
};

namespace detail {

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5], std::span<const std::uint8_t> data)
{
    put_u32be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_pos = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = ::crc32(0L, out.data() + type_pos, static_cast<uInt>(4 + data.size()));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

} // namespace detail

/// Lossless PNG (8-bit RGB, filter 0, zlib level 6). Output is a pure function of the raster.
inline ImageBlob encode_png(const Raster& r)
{
    std::vector<std::uint8_t> filtered;
    filtered.reserve(std::size_t(r.height) * (std::size_t(r.width) * 3 + 1));
    for (int y = 0; y < r.height; ++y) {
        filtered.push_back(0);
        const auto* row = &r.rgb[std::size_t(y) * r.width * 3];
        filtered.insert(filtered.end(), row, row + std::size_t(r.width) * 3);
    }
    uLongf zlen = compressBound(static_cast<uLong>(filtered.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, filtered.data(), static_cast<uLong>(filtered.size()), 6) != Z_OK)
        throw std::runtime_error("zlib compression failed");
    z.resize(zlen);

    ImageBlob blob{r.width, r.height, {}};
    auto& out = blob.png;
    static constexpr std::uint8_t sig[] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    out.insert(out.end(), std::begin(sig), std::end(sig));
    std::vector<std::uint8_t> ihdr;
    detail::put_u32be(ihdr, static_cast<std::uint32_t>(r.width));
    detail::put_u32be(ihdr, static_cast<std::uint32_t>(r.height));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
    detail::put_chunk(out, "IHDR", ihdr);
    detail::put_chunk(out, "IDAT", z);
    detail::put_chunk(out, "IEND", {});
    return blob;
}

inline std::string base64_encode(std::span<const std::uint8_t> data)
{
    static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < data.size(); i += 3) {
        const std::uint32_t v = (std::uint32_t(data[i]) << 16) | (std::uint32_t(data[i + 1]) << 8) | data[i + 2];
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (const auto rest = data.size() - i; rest > 0) {
        std::uint32_t v = std::uint32_t(data[i]) << 16;
        if (rest == 2) v |= std::uint32_t(data[i + 1]) << 8;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += rest == 2 ? tbl[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

/// A possibly not-yet-rasterized image. Dimensions are known up front; the PNG
/// bytes are produced on first access and cached. Copies share the cache, and
/// first access is thread-safe.
class Image {
public:
    Image() = default;

    static Image ready(ImageBlob blob)
    {
        Image img;
        img.width_ = blob.width;
        img.height_ = blob.height;
        img.state_ = std::make_shared<State>();
        img.state_->blob = std::move(blob);
        std::call_once(img.state_->once, [] {});
        return img;
    }

    static Image deferred(int width, int height, std::function<ImageBlob()> producer)
    {
        Image img;
        img.width_ = width;
        img.height_ = height;
        img.state_ = std::make_shared<State>();
        img.state_->producer = std::move(producer);
        return img;
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return !state_; }

    const ImageBlob& blob() const
    {
        if (!state_) throw std::logic_error("empty image");
        std::call_once(state_->once, [this] {
            state_->blob = state_->producer();
            state_->producer = nullptr;
        });
        return state_->blob;
    }

    const std::vector<std::uint8_t>& png() const { return blob().png; }

private:
    struct State {
        std::once_flag once;
        std::function<ImageBlob()> producer;
        ImageBlob blob;
    };

    int width_ = 0;
    int height_ = 0;
    std::shared_ptr<State> state_;
};

} // namespace caicl
