#include "lesionkit/imageops.hpp"

#include "byte_order.hpp"
#include "lesionkit/csv.hpp"
#include "lesionkit/error.hpp"
#include "lesionkit/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace lesionkit::imageops {

namespace {

void check_dims(int width, int height, int channels) {
    if (width < 0 || height < 0) throw ValidationError("negative image dimensions");
    if (channels != 1 && channels != 3) {
        throw ValidationError("unsupported channel count " + std::to_string(channels));
    }
}

std::size_t sample_count(int width, int height, int channels) {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels);
}

std::uint8_t to_byte(double v) {
    const double r = std::floor(v + 0.5);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

RasterImage::RasterImage(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height, channels);
    samples_.assign(sample_count(width, height, channels), fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    check_dims(width, height, channels);
    if (samples_.size() != sample_count(width, height, channels)) {
        throw ValidationError("raster sample count does not match dimensions");
    }
}

FloatPlane::FloatPlane(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height, channels);
    samples_.assign(sample_count(width, height, channels), fill);
}

FloatPlane::FloatPlane(int width, int height, int channels, std::vector<double> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    check_dims(width, height, channels);
    if (samples_.size() != sample_count(width, height, channels)) {
        throw ValidationError("plane sample count does not match dimensions");
    }
    for (double v : samples_) {
        if (!std::isfinite(v)) throw ValidationError("plane holds a non-finite value");
    }
}

// ---------------------------------------------------------------------------
// PNM

RasterImage decode_pnm(std::span<const std::uint8_t> bytes) {
    return decode_pnm(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RasterImage decode_pnm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("pnm: unknown magic (expected P5 or P6)");
    }
    const int channels = bytes[1] == '5' ? 1 : 3;
    std::size_t pos = 2;

    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
    auto read_header_int = [&](const char* what) -> long long {
        for (;;) {
            if (pos >= bytes.size()) throw ParseError(std::string("pnm: truncated header before ") + what);
            if (is_space(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n' && bytes[pos] != '\r') ++pos;
            } else {
                break;
            }
        }
        long long value = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            value = value * 10 + (bytes[pos] - '0');
            if (value > (1LL << 31)) throw ParseError(std::string("pnm: ") + what + " too large");
            ++pos;
        }
        if (pos == start) throw ParseError(std::string("pnm: malformed ") + what);
        return value;
    };

    // The separator after each header integer is checked by the next read;
    // the one after maxval must be a single whitespace byte.
    if (pos < bytes.size() && !is_space(bytes[pos]) && bytes[pos] != '#') {
        throw ParseError("pnm: unknown magic (expected P5 or P6)");
    }
    const auto width = read_header_int("width");
    const auto height = read_header_int("height");
    const auto maxval = read_header_int("maxval");
    if (width < 1 || height < 1) throw ParseError("pnm: dimensions must be positive");
    if (maxval != 255) throw ParseError("pnm: unsupported maxval " + std::to_string(maxval) + " (expected 255)");
    if (pos >= bytes.size() || !is_space(bytes[pos])) throw ParseError("pnm: missing whitespace after maxval");
    ++pos;

    const auto expected = sample_count(static_cast<int>(width), static_cast<int>(height), channels);
    const auto available = bytes.size() - pos;
    if (available < expected) {
        throw ParseError("pnm: truncated payload (" + std::to_string(available) + " of " +
                         std::to_string(expected) + " bytes)");
    }
    if (available > expected) throw ParseError("pnm: trailing bytes after payload");

    std::vector<std::uint8_t> samples(expected);
    std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + pos), expected, samples.begin());
    return RasterImage(static_cast<int>(width), static_cast<int>(height), channels, std::move(samples));
}

std::string encode_pnm(const RasterImage& img) {
    if (img.empty()) throw ValidationError("pnm: cannot encode an empty raster");
    std::string out = img.channels() == 1 ? "P5\n" : "P6\n";
    out += std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    const auto s = img.samples();
    out.append(reinterpret_cast<const char*>(s.data()), s.size());
    return out;
}

RasterImage read_pnm(const std::string& path) {
    try {
        return decode_pnm(std::string_view(csv::read_file(path)));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_pnm(const std::string& path, const RasterImage& img) { csv::write_file(path, encode_pnm(img)); }

std::string encode_float_plane(const FloatPlane& plane) {
    std::string out = "LKFP";
    detail::put_u32(out, static_cast<std::uint32_t>(plane.width()));
    detail::put_u32(out, static_cast<std::uint32_t>(plane.height()));
    detail::put_u32(out, static_cast<std::uint32_t>(plane.channels()));
    for (double v : plane.samples()) detail::put_f64(out, v);
    return out;
}

FloatPlane decode_float_plane(std::string_view bytes) {
    auto fail = [](const char* what) -> void { throw ParseError(std::string("float plane: ") + what); };
    detail::Reader reader(bytes, fail);
    if (reader.bytes(4) != "LKFP") fail("bad magic");
    const auto w = reader.u32();
    const auto h = reader.u32();
    const auto c = reader.u32();
    if (c != 1 && c != 3) fail("bad channel count");
    if (w > (1u << 30) || h > (1u << 30)) fail("dimensions too large");
    const auto n = sample_count(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    if (reader.remaining() != n * 8) fail("payload size does not match header");
    std::vector<double> samples(n);
    for (auto& v : samples) v = reader.f64();
    return FloatPlane(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(samples));
}

// ---------------------------------------------------------------------------
// Resampling

RasterImage resize(const RasterImage& img, int out_width, int out_height, Interpolation method) {
    if (out_width < 1 || out_height < 1) throw ValidationError("resize: output dimensions must be >= 1");
    if (img.empty()) throw ValidationError("resize: empty input");
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    RasterImage out(out_width, out_height, ch);

    if (method == Interpolation::nearest) {
        // floor((x + 0.5) * w / out_w), evaluated exactly in integers.
        std::vector<int> xs(out_width), ys(out_height);
        for (int x = 0; x < out_width; ++x) {
            xs[x] = std::min<int>(w - 1, static_cast<int>((2LL * x + 1) * w / (2LL * out_width)));
        }
        for (int y = 0; y < out_height; ++y) {
            ys[y] = std::min<int>(h - 1, static_cast<int>((2LL * y + 1) * h / (2LL * out_height)));
        }
        for (int y = 0; y < out_height; ++y) {
            for (int x = 0; x < out_width; ++x) {
                for (int c = 0; c < ch; ++c) out.at(x, y, c) = img.at(xs[x], ys[y], c);
            }
        }
        return out;
    }

    struct Tap {
        int i0, i1;
        double frac;
    };
    auto taps = [](int in, int outn) {
        std::vector<Tap> t(outn);
        const double scale = static_cast<double>(in) / outn;
        for (int o = 0; o < outn; ++o) {
            double s = (o + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            t[o] = {i0, std::min(i0 + 1, in - 1), s - i0};
        }
        return t;
    };
    const auto tx = taps(w, out_width);
    const auto ty = taps(h, out_height);
    for (int y = 0; y < out_height; ++y) {
        const auto& ay = ty[y];
        for (int x = 0; x < out_width; ++x) {
            const auto& ax = tx[x];
            for (int c = 0; c < ch; ++c) {
                const double top = img.at(ax.i0, ay.i0, c) * (1.0 - ax.frac) + img.at(ax.i1, ay.i0, c) * ax.frac;
                const double bottom = img.at(ax.i0, ay.i1, c) * (1.0 - ax.frac) + img.at(ax.i1, ay.i1, c) * ax.frac;
                out.at(x, y, c) = to_byte(top * (1.0 - ay.frac) + bottom * ay.frac);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentSpec::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(shift_max_frac)) throw ValidationError("shift_max_frac must lie in [0, 1]");
    if (!in_unit(zoom_max_frac)) throw ValidationError("zoom_max_frac must lie in [0, 1]");
    if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 360.0)) {
        throw ValidationError("rotation_max_deg must lie in [0, 360]");
    }
}

TransformParams sample_transform(const AugmentSpec& spec, std::string_view image_id, int replica_idx, int width,
                                 int height) {
    spec.validate();
    if (replica_idx < 0) throw ValidationError("replica_idx must be >= 0");
    CounterStream stream(mix_key({spec.seed, fnv1a64(image_id), static_cast<std::uint64_t>(replica_idx)}));

    // Every draw is consumed even when its range is degenerate, so each
    // parameter always comes from the same stream position.
    TransformParams p;
    const double max_dx = spec.shift_max_frac * width;
    const double max_dy = spec.shift_max_frac * height;
    p.dx = stream.next_between(-max_dx, max_dx);
    p.dy = stream.next_between(-max_dy, max_dy);
    p.zoom = stream.next_between(1.0 - spec.zoom_max_frac, 1.0 + spec.zoom_max_frac);
    p.angle_deg = stream.next_between(-spec.rotation_max_deg, spec.rotation_max_deg);
    const bool hflip = stream.next_unit() < 0.5;
    const bool vflip = stream.next_unit() < 0.5;
    p.hflip = spec.allow_hflip && hflip;
    p.vflip = spec.allow_vflip && vflip;
    if (max_dx == 0.0) p.dx = 0.0;
    if (max_dy == 0.0) p.dy = 0.0;
    if (spec.zoom_max_frac == 0.0) p.zoom = 1.0;
    if (spec.rotation_max_deg == 0.0) p.angle_deg = 0.0;
    return p;
}

namespace {

// cos/sin with exact values at multiples of 90 degrees, so quarter turns
// map pixel centers onto pixel centers.
std::pair<double, double> cos_sin_deg(double deg) {
    const double turns = deg / 90.0;
    if (turns == std::floor(turns)) {
        static constexpr std::array<std::pair<double, double>, 4> kQuarter{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
        long long q = static_cast<long long>(turns) % 4;
        if (q < 0) q += 4;
        return kQuarter[static_cast<std::size_t>(q)];
    }
    const double rad = deg * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

}  // namespace

RasterImage apply_transform(const RasterImage& img, const TransformParams& params, Interpolation interp, Fill fill) {
    if (img.empty()) return img;
    if (!(params.zoom > 0.0)) throw ValidationError("zoom must be positive");
    const int w = img.width();
    const int h = img.height();
    const int ch = img.channels();
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;
    const auto [cs, sn] = cos_sin_deg(params.angle_deg);

    RasterImage out(w, h, ch);

    auto fetch = [&](int ix, int iy, int c) -> double {
        if (ix < 0 || ix >= w || iy < 0 || iy >= h) {
            if (fill == Fill::zero) return 0.0;
            ix = std::clamp(ix, 0, w - 1);
            iy = std::clamp(iy, 0, h - 1);
        }
        return img.at(ix, iy, c);
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Undo shift, zoom and rotation (about the center), then flips.
            const double u = (x - params.dx - cx) / params.zoom;
            const double v = (y - params.dy - cy) / params.zoom;
            double sx = cx + (cs * u - sn * v);
            double sy = cy + (sn * u + cs * v);
            if (params.hflip) sx = (w - 1) - sx;
            if (params.vflip) sy = (h - 1) - sy;

            if (interp == Interpolation::nearest) {
                const int ix = static_cast<int>(std::floor(sx + 0.5));
                const int iy = static_cast<int>(std::floor(sy + 0.5));
                for (int c = 0; c < ch; ++c) out.at(x, y, c) = static_cast<std::uint8_t>(fetch(ix, iy, c));
                continue;
            }

            if (fill == Fill::edge) {
                sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
                sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
            }
            const double fx0 = std::floor(sx);
            const double fy0 = std::floor(sy);
            const double ax = sx - fx0;
            const double ay = sy - fy0;
            // Far outside the source every tap is fill; avoid int overflow.
            if (fx0 < -2.0 || fx0 > w + 1.0 || fy0 < -2.0 || fy0 > h + 1.0) {
                for (int c = 0; c < ch; ++c) out.at(x, y, c) = 0;
                continue;
            }
            const int x0 = static_cast<int>(fx0);
            const int y0 = static_cast<int>(fy0);
            for (int c = 0; c < ch; ++c) {
                const double top = fetch(x0, y0, c) * (1.0 - ax) + (ax > 0.0 ? fetch(x0 + 1, y0, c) * ax : 0.0);
                const double bottom =
                    ay > 0.0 ? fetch(x0, y0 + 1, c) * (1.0 - ax) + (ax > 0.0 ? fetch(x0 + 1, y0 + 1, c) * ax : 0.0)
                             : 0.0;
                out.at(x, y, c) = to_byte(top * (1.0 - ay) + bottom * ay);
            }
        }
    }
    return out;
}

std::vector<RasterImage> generate_replicas(const RasterImage& img, std::string_view image_id, const AugmentSpec& spec,
                                           int k, Interpolation interp, Fill fill) {
    if (k < 1) throw ValidationError("replica count must be >= 1");
    spec.validate();
    std::vector<RasterImage> replicas;
    replicas.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        if (i == 0 && spec.include_identity) {
            replicas.push_back(img);
            continue;
        }
        const auto params = sample_transform(spec, image_id, i, img.width(), img.height());
        replicas.push_back(apply_transform(img, params, interp, fill));
    }
    return replicas;
}

// ---------------------------------------------------------------------------
// Normalization

FloatPlane rescale_mask(const RasterImage& mask) {
    if (mask.channels() != 1) throw ValidationError("rescale_mask: mask must have a single channel");
    std::vector<double> v(mask.samples().size());
    std::transform(mask.samples().begin(), mask.samples().end(), v.begin(),
                   [](std::uint8_t s) { return s / 255.0; });
    return FloatPlane(mask.width(), mask.height(), 1, std::move(v));
}

FloatPlane normalize_global_mean(const RasterImage& img, const std::array<double, 3>& mean_rgb) {
    if (img.channels() != 3) throw ValidationError("normalize_global_mean: expected 3 channels");
    for (double m : mean_rgb) {
        if (!std::isfinite(m)) throw ValidationError("normalize_global_mean: non-finite mean");
    }
    const auto s = img.samples();
    std::vector<double> v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i] - mean_rgb[i % 3];
    return FloatPlane(img.width(), img.height(), 3, std::move(v));
}

NormalizedImage normalize_per_image(const RasterImage& img, bool divide_std) {
    if (img.empty()) throw ValidationError("normalize_per_image: empty image");
    const auto s = img.samples();
    const double n = static_cast<double>(s.size());
    double sum = 0.0;
    for (auto v : s) sum += v;
    const double mean = sum / n;

    std::vector<double> centered(s.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        centered[i] = s[i] - mean;
        sq += centered[i] * centered[i];
    }
    const double stddev = std::sqrt(sq / n);

    NormalizedImage out;
    out.mean = mean;
    out.stddev = stddev;
    if (divide_std) {
        if (stddev == 0.0) {
            out.std_skipped = true;
        } else {
            for (auto& v : centered) v /= stddev;
        }
    }
    out.plane = FloatPlane(img.width(), img.height(), img.channels(), std::move(centered));
    return out;
}

}  // namespace lesionkit::imageops
