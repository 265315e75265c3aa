#include "image.hpp"

#include "error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace cytoclip {

namespace {

double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct Header {
    std::string magic;
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 0;
    std::size_t data_offset = 0;
};

Header parse_header(const std::string& data, const std::filesystem::path& path) {
    Header h;
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        for (;;) {
            while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
            if (pos < data.size() && data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        const std::size_t start = pos;
        while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
        return data.substr(start, pos - start);
    };
    try {
        h.magic = next_token();
        h.width = std::stoul(next_token());
        h.height = std::stoul(next_token());
        h.maxval = static_cast<unsigned>(std::stoul(next_token()));
    } catch (const std::exception&) {
        fail(ErrorKind::Parse, "malformed PNM header: " + path.string());
    }
    h.data_offset = pos + 1;  // single whitespace byte after maxval
    return h;
}

} // namespace

Image crop(const Image& src, long x0, long y0, std::size_t w, std::size_t h) {
    Image out(w, h, src.channels, 0);
    for (std::size_t y = 0; y < h; ++y) {
        const long sy = y0 + static_cast<long>(y);
        if (sy < 0 || sy >= static_cast<long>(src.height)) continue;
        for (std::size_t x = 0; x < w; ++x) {
            const long sx = x0 + static_cast<long>(x);
            if (sx < 0 || sx >= static_cast<long>(src.width)) continue;
            for (std::size_t c = 0; c < src.channels; ++c)
                out.at(x, y, c) = src.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
        }
    }
    return out;
}

Image resize_bicubic(const Image& src, std::size_t new_width, std::size_t new_height) {
    if (src.empty() || new_width == 0 || new_height == 0) fail(ErrorKind::InvalidArgument, "resize of empty image");
    if (new_width == src.width && new_height == src.height) return src;

    // Precompute 4-tap indices/weights per output column and row (pixel-centre aligned).
    struct Taps {
        std::size_t idx[4];
        double w[4];
    };
    auto make_taps = [](std::size_t out_n, std::size_t in_n) {
        std::vector<Taps> taps(out_n);
        const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
        for (std::size_t o = 0; o < out_n; ++o) {
            const double centre = (static_cast<double>(o) + 0.5) * scale - 0.5;
            const double base = std::floor(centre);
            const double frac = centre - base;
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                const long i = static_cast<long>(base) - 1 + k;
                taps[o].idx[k] = static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(in_n) - 1));
                taps[o].w[k] = cubic_weight(frac - static_cast<double>(k - 1));
                sum += taps[o].w[k];
            }
            for (double& w : taps[o].w) w /= sum;
        }
        return taps;
    };
    const auto xt = make_taps(new_width, src.width);
    const auto yt = make_taps(new_height, src.height);

    Image out(new_width, new_height, src.channels);
    std::vector<double> row(src.width * src.channels);
    // Separable: vertical pass into `row`, then horizontal pass.
    for (std::size_t oy = 0; oy < new_height; ++oy) {
        const Taps& ty = yt[oy];
        std::fill(row.begin(), row.end(), 0.0);
        for (int k = 0; k < 4; ++k) {
            const std::uint8_t* srow = &src.pixels[ty.idx[k] * src.width * src.channels];
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += ty.w[k] * srow[i];
        }
        for (std::size_t ox = 0; ox < new_width; ++ox) {
            const Taps& tx = xt[ox];
            for (std::size_t c = 0; c < src.channels; ++c) {
                double v = 0.0;
                for (int k = 0; k < 4; ++k) v += tx.w[k] * row[tx.idx[k] * src.channels + c];
                out.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        fail(ErrorKind::InvalidArgument, "PNM output supports 1 or 3 channels");
    std::ostringstream ss;
    ss << (image.channels == 1 ? "P5" : "P6") << "\n" << image.width << " " << image.height << "\n255\n";
    std::string data = ss.str();
    data.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    write_file_atomic(path, data);
}

Image read_pnm(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    const Header h = parse_header(data, path);
    if ((h.magic != "P5" && h.magic != "P6") || h.maxval != 255)
        fail(ErrorKind::Parse, "unsupported PNM variant (need 8-bit P5/P6): " + path.string());
    Image img(h.width, h.height, h.magic == "P5" ? 1 : 3);
    if (data.size() < h.data_offset + img.pixels.size()) fail(ErrorKind::Parse, "truncated PNM: " + path.string());
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(h.data_offset), img.pixels.size(), img.pixels.begin());
    return img;
}

void write_pgm16(const std::filesystem::path& path, std::size_t width, std::size_t height,
                 const std::vector<std::uint16_t>& samples) {
    if (samples.size() != width * height) fail(ErrorKind::Shape, "label map size mismatch");
    std::ostringstream ss;
    ss << "P5\n" << width << " " << height << "\n65535\n";
    std::string data = ss.str();
    data.reserve(data.size() + samples.size() * 2);
    for (std::uint16_t v : samples) {
        data.push_back(static_cast<char>(v >> 8));
        data.push_back(static_cast<char>(v & 0xff));
    }
    write_file_atomic(path, data);
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, std::size_t& width, std::size_t& height) {
    const std::string data = read_text_file(path);
    const Header h = parse_header(data, path);
    if (h.magic != "P5" || h.maxval != 65535) fail(ErrorKind::Parse, "expected 16-bit PGM: " + path.string());
    width = h.width;
    height = h.height;
    std::vector<std::uint16_t> out(width * height);
    if (data.size() < h.data_offset + out.size() * 2) fail(ErrorKind::Parse, "truncated PGM: " + path.string());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto hi = static_cast<unsigned char>(data[h.data_offset + 2 * i]);
        const auto lo = static_cast<unsigned char>(data[h.data_offset + 2 * i + 1]);
        out[i] = static_cast<std::uint16_t>((hi << 8) | lo);
    }
    return out;
}

} // namespace cytoclip
