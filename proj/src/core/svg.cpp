#include "core/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace prefopt::svg {

namespace {

constexpr double kCanvas = 640.0;
constexpr double kPad = 48.0;

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw_io("cannot open svg for writing: " + tmp);
        os << contents;
        if (!os) throw_io("failed writing svg: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move svg into place: " + path);
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
    return buf;
}

// Five-stop blue->green->yellow ramp.
std::string color_for(double t) {
    t = std::clamp(t, 0.0, 1.0);
    struct Stop {
        double r, g, b;
    };
    static const Stop stops[5] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98},
                                  {253, 231, 37}};
    const double x = t * 4.0;
    const int i = std::min(3, static_cast<int>(x));
    const double f = x - i;
    const int r = static_cast<int>(stops[i].r + f * (stops[i + 1].r - stops[i].r));
    const int g = static_cast<int>(stops[i].g + f * (stops[i + 1].g - stops[i].g));
    const int b = static_cast<int>(stops[i].b + f * (stops[i + 1].b - stops[i].b));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return buf;
}

}  // namespace

void write_quiver(const std::vector<flow::FieldPoint>& points, const std::string& path) {
    if (points.empty()) throw_invalid("quiver: empty field");
    double x_lo = points[0].x1, x_hi = points[0].x1;
    double y_lo = points[0].x2, y_hi = points[0].x2;
    double max_mag = 0.0;
    for (const auto& p : points) {
        x_lo = std::min(x_lo, p.x1);
        x_hi = std::max(x_hi, p.x1);
        y_lo = std::min(y_lo, p.x2);
        y_hi = std::max(y_hi, p.x2);
        max_mag = std::max(max_mag, std::hypot(p.dx1, p.dx2));
    }
    if (max_mag == 0.0) max_mag = 1.0;
    const double sx = (kCanvas - 2 * kPad) / std::max(1e-12, x_hi - x_lo);
    const double sy = (kCanvas - 2 * kPad) / std::max(1e-12, y_hi - y_lo);
    // Arrow length normalized against the densest packing.
    const double arrow = 0.8 * (kCanvas - 2 * kPad) /
                         std::max(1.0, std::sqrt(static_cast<double>(points.size())));

    std::string out;
    out += fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
               "viewBox=\"0 0 %.0f %.0f\">\n",
               kCanvas, kCanvas, kCanvas, kCanvas);
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& p : points) {
        const double cx = kPad + (p.x1 - x_lo) * sx;
        const double cy = kCanvas - kPad - (p.x2 - y_lo) * sy;
        const double mag = std::hypot(p.dx1, p.dx2);
        if (mag == 0.0) continue;
        const double ux = p.dx1 / mag, uy = p.dx2 / mag;
        const double len = arrow * (0.25 + 0.75 * mag / max_mag);
        const double ex = cx + ux * len;
        const double ey = cy - uy * len;
        out += fmt("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                   "stroke=\"#1f4e79\" stroke-width=\"1\"/>\n",
                   cx, cy, ex, ey);
        // Arrowhead: short back-strokes at +-25 degrees.
        const double hx = -ux, hy = uy;
        const double c25 = 0.9063077870366499, s25 = 0.42261826174069944;
        const double h = 0.35 * len;
        out += fmt("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                   "stroke=\"#1f4e79\" stroke-width=\"1\"/>\n",
                   ex, ey, ex + h * (hx * c25 - hy * s25), ey + h * (hy * c25 + hx * s25));
        out += fmt("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                   "stroke=\"#1f4e79\" stroke-width=\"1\"/>\n",
                   ex, ey, ex + h * (hx * c25 + hy * s25), ey + h * (hy * c25 - hx * s25));
    }
    out += "</svg>\n";
    atomic_write(path, out);
}

void write_heatmap(const flow::Landscape& ls, const std::string& path) {
    if (ls.values.empty()) throw_invalid("heatmap: empty landscape");
    double lo = ls.values[0], hi = ls.values[0];
    for (double v : ls.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = (hi > lo) ? hi - lo : 1.0;
    const double cw = (kCanvas - 2 * kPad) / ls.res_a;
    const double ch = (kCanvas - 2 * kPad) / ls.res_b;

    std::string out;
    out += fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
               "viewBox=\"0 0 %.0f %.0f\">\n",
               kCanvas, kCanvas, kCanvas, kCanvas);
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int ia = 0; ia < ls.res_a; ++ia) {
        for (int ib = 0; ib < ls.res_b; ++ib) {
            const double v = ls.values[static_cast<std::size_t>(ia * ls.res_b + ib)];
            const double t = (v - lo) / span;
            const double x = kPad + ia * cw;
            const double y = kCanvas - kPad - (ib + 1) * ch;
            out += fmt("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" ", x, y,
                       cw + 0.5, ch + 0.5);
            out += "fill=\"" + color_for(t) + "\"/>\n";
        }
    }
    out += "</svg>\n";
    atomic_write(path, out);
}

}  // namespace prefopt::svg
