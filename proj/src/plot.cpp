#include "oasis/eval.hpp"

#include "oasis/csv.hpp"
#include "oasis/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace oasis::eval {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
    return v;
}

void chunk(std::string& out, const char* type, const std::string& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    put_u32(out, static_cast<std::uint32_t>(
                     crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

const char kSignature[] = "\x89PNG\r\n\x1a\n";

}  // namespace

void write_png(const std::string& path, int width, int height, const std::vector<std::uint8_t>& rgb,
               const std::vector<std::pair<std::string, std::string>>& text) {
    if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw Error(ErrorCode::ShapeMismatch, "pixel buffer does not match " + std::to_string(width) + "x" +
                                                  std::to_string(height));
    std::string raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + width * 3));
    for (int y = 0; y < height; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(rgb.data()) + static_cast<std::size_t>(y) * width * 3,
                   static_cast<std::size_t>(width) * 3);
    }
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(packed_size, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw Error(ErrorCode::IoError, "zlib compression failed");
    packed.resize(packed_size);

    std::string png(kSignature, 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width));
    put_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
    chunk(png, "IHDR", ihdr);
    for (const auto& [k, v] : text) chunk(png, "tEXt", k + '\0' + v);
    chunk(png, "IDAT", packed);
    chunk(png, "IEND", "");

    std::ofstream out(path, std::ios::binary);
    out.write(png.data(), static_cast<std::streamsize>(png.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
}

std::vector<std::pair<std::string, std::string>> read_png_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    const std::string s{std::istreambuf_iterator<char>(in), {}};
    if (s.size() < 8 || s.compare(0, 8, std::string(kSignature, 8)) != 0)
        throw Error(ErrorCode::ParseError, path + " is not a PNG");
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t at = 8;
    while (at + 12 <= s.size()) {
        const auto len = get_u32(s, at);
        const auto type = s.substr(at + 4, 4);
        if (at + 12 + len > s.size()) throw Error(ErrorCode::ParseError, path + " is truncated");
        if (type == "tEXt") {
            const auto data = s.substr(at + 8, len);
            const auto nul = data.find('\0');
            if (nul != std::string::npos) out.emplace_back(data.substr(0, nul), data.substr(nul + 1));
        }
        at += 12 + len;
    }
    return out;
}

std::array<std::uint8_t, 3> colormap(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    if (!std::isfinite(t)) return {128, 128, 128};
    t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
    const double f = t - static_cast<double>(i);
    std::array<std::uint8_t, 3> c{};
    for (int k = 0; k < 3; ++k)
        c[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    return c;
}

FieldPlot emit_field_plot(const dan::DanModel* model, const FieldPlotSpec& spec, const std::string& path) {
    if (!model) throw Error(ErrorCode::UnfittedModel, "no trained model to plot");
    if (spec.width < 2 || spec.height < 2 || !(spec.lat_max > spec.lat_min) || !(spec.lon_max > spec.lon_min))
        throw Error(ErrorCode::InvalidConfig, "plot grid needs width, height >= 2 and a nonempty box");
    const int W = spec.width, H = spec.height;
    nn::Matrix X(static_cast<Eigen::Index>(W) * H, model->features.width());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double lat = spec.lat_max - (spec.lat_max - spec.lat_min) * y / (H - 1);
            const double lon = spec.lon_min + (spec.lon_max - spec.lon_min) * x / (W - 1);
            X.row(static_cast<Eigen::Index>(y) * W + x) = dan::encode_point(model->features, spec.time, lat, lon, spec.tide);
        }
    const Eigen::VectorXd values = dan::predict_points(*model, X);

    FieldPlot plot;
    plot.field = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), H, W);
    plot.vmin = values.minCoeff();
    plot.vmax = values.maxCoeff();
    for (const auto& o : spec.observations) {
        plot.vmin = std::min(plot.vmin, o.value);
        plot.vmax = std::max(plot.vmax, o.value);
    }
    const double span = plot.vmax > plot.vmin ? plot.vmax - plot.vmin : 1.0;
    auto scale = [&](double v) { return colormap((v - plot.vmin) / span); };

    constexpr int kGap = 8, kBar = 16, kPad = 4;
    const int img_w = W + kGap + kBar + kPad, img_h = H;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img_w) * img_h * 3, 255);
    auto set = [&](int x, int y, std::array<std::uint8_t, 3> c) {
        if (x < 0 || y < 0 || x >= img_w || y >= img_h) return;
        std::copy(c.begin(), c.end(), rgb.begin() + (static_cast<std::size_t>(y) * img_w + x) * 3);
    };
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) set(x, y, scale(plot.field(y, x)));
    for (int y = 0; y < H; ++y) {
        const auto c = colormap(1.0 - static_cast<double>(y) / (H - 1));
        for (int x = 0; x < kBar; ++x) set(W + kGap + x, y, c);
    }
    for (const auto& o : spec.observations) {
        const int cx = static_cast<int>(std::lround((o.lon - spec.lon_min) / (spec.lon_max - spec.lon_min) * (W - 1)));
        const int cy = static_cast<int>(std::lround((spec.lat_max - o.lat) / (spec.lat_max - spec.lat_min) * (H - 1)));
        if (cx < 0 || cy < 0 || cx >= W || cy >= H) continue;
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx) {
                if (cx + dx >= W) continue;
                const bool edge = std::abs(dx) == 3 || std::abs(dy) == 3;
                set(cx + dx, cy + dy, edge ? std::array<std::uint8_t, 3>{0, 0, 0} : scale(o.value));
            }
    }
    std::vector<std::pair<std::string, std::string>> text{
        {"Title", spec.title.empty() ? "Imputed salinity " + format_iso8601(spec.time) : spec.title},
        {"Legend-Min", csv::format_double(plot.vmin)},
        {"Legend-Max", csv::format_double(plot.vmax)},
        {"Legend-Units", "psu"},
        {"Extent", csv::format_double(spec.lat_min) + "," + csv::format_double(spec.lat_max) + "," +
                       csv::format_double(spec.lon_min) + "," + csv::format_double(spec.lon_max)}};
    write_png(path, img_w, img_h, rgb, text);
    return plot;
}

}  // namespace oasis::eval
