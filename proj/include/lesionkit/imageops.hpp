#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lesionkit::imageops {

// 8-bit raster, row-major, channel-interleaved. channels is 1 or 3.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels, std::uint8_t fill = 0);
    RasterImage(int width, int height, int channels, std::vector<std::uint8_t> samples);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return samples_.empty(); }

    std::uint8_t& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

    std::span<const std::uint8_t> samples() const { return samples_; }
    std::span<std::uint8_t> samples() { return samples_; }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<std::uint8_t> samples_;
};

// Real-valued counterpart of RasterImage; values must be finite.
class FloatPlane {
public:
    FloatPlane() = default;
    FloatPlane(int width, int height, int channels, double fill = 0.0);
    FloatPlane(int width, int height, int channels, std::vector<double> samples);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return samples_.size(); }

    double& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

    std::span<const double> samples() const { return samples_; }
    std::span<double> samples() { return samples_; }

    bool same_shape(const FloatPlane& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

    friend bool operator==(const FloatPlane&, const FloatPlane&) = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<double> samples_;
};

// ---------------------------------------------------------------------------
// PNM (P5 grayscale / P6 RGB, maxval 255). Encoding writes
// "P5\n<w> <h>\n255\n" followed by the raw samples.

RasterImage decode_pnm(std::span<const std::uint8_t> bytes);
RasterImage decode_pnm(std::string_view bytes);
std::string encode_pnm(const RasterImage& img);

RasterImage read_pnm(const std::string& path);
void write_pnm(const std::string& path, const RasterImage& img);

// FloatPlane file: 16-byte header ("LKFP", then width, height, channels as
// little-endian uint32) followed by little-endian IEEE-754 doubles.
std::string encode_float_plane(const FloatPlane& plane);
FloatPlane decode_float_plane(std::string_view bytes);

// ---------------------------------------------------------------------------
// Geometry

enum class Interpolation { bilinear, nearest };
enum class Fill { edge, zero };

// Bilinear uses half-pixel centers with edge clamping; nearest picks the
// source pixel whose center is closest, rounding ties up.
RasterImage resize(const RasterImage& img, int out_width, int out_height,
                   Interpolation method = Interpolation::bilinear);

struct AugmentSpec {
    double shift_max_frac = 0.10;
    double zoom_max_frac = 0.20;
    double rotation_max_deg = 270.0;
    bool allow_hflip = true;
    bool allow_vflip = true;
    bool include_identity = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TransformParams {
    double dx = 0.0;  // pixels, positive moves content right
    double dy = 0.0;  // pixels, positive moves content down
    double zoom = 1.0;
    double angle_deg = 0.0;
    bool hflip = false;
    bool vflip = false;

    bool is_identity() const {
        return dx == 0.0 && dy == 0.0 && zoom == 1.0 && angle_deg == 0.0 && !hflip && !vflip;
    }
    friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

// Draws parameters uniformly within the spec's bounds. The draw is keyed on
// (spec.seed, image_id, replica_idx) only, so results do not depend on call
// order. Shifts scale with the given image dimensions; rotation is drawn
// from [-rotation_max_deg, +rotation_max_deg].
TransformParams sample_transform(const AugmentSpec& spec, std::string_view image_id, int replica_idx,
                                 int width, int height);

// Applies flip, then rotation about the image center, then zoom about the
// center, then shift, by inverse-mapping every output pixel. Images should
// use bilinear + edge; masks must use nearest + zero.
RasterImage apply_transform(const RasterImage& img, const TransformParams& params,
                            Interpolation interp = Interpolation::bilinear, Fill fill = Fill::edge);

// Replica i is the original image when i == 0 and spec.include_identity,
// otherwise apply_transform(img, sample_transform(spec, image_id, i)).
std::vector<RasterImage> generate_replicas(const RasterImage& img, std::string_view image_id,
                                           const AugmentSpec& spec, int k,
                                           Interpolation interp = Interpolation::bilinear,
                                           Fill fill = Fill::edge);

// ---------------------------------------------------------------------------
// Normalization

FloatPlane rescale_mask(const RasterImage& mask);

FloatPlane normalize_global_mean(const RasterImage& img, const std::array<double, 3>& mean_rgb);

struct NormalizedImage {
    FloatPlane plane;
    double mean = 0.0;
    double stddev = 0.0;
    // Set when std division was requested but skipped because stddev == 0.
    bool std_skipped = false;
};

NormalizedImage normalize_per_image(const RasterImage& img, bool divide_std);

}  // namespace lesionkit::imageops
