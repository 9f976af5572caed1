#include "core/gradflow.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace prefopt::flow {

namespace {

std::array<double, 2> field_at(FieldMethod method, math::Beta beta, double x1, double x2,
                               const std::optional<PilotParams>& pilot) {
    if (method == FieldMethod::Dpo) {
        math::RatioPoint p(x1, x2);
        return {math::dpo_partial_x1(p, beta), math::dpo_partial_x2(p, beta)};
    }
    if (!pilot.has_value()) throw_config("pilot field requires pilot parameters");
    double y1 = pilot->y1, y2 = pilot->y2;
    if (!pilot->fixed_y) {
        y1 = x1 / pilot->p1;
        y2 = x2 / pilot->p2;
    }
    return {math::pilot_partial_x1(x1, y2, beta), math::pilot_partial_x2(x2, y1, beta)};
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw_io("cannot open output file: " + tmp);
        os << contents;
        if (!os) throw_io("failed writing output file: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move output into place: " + path);
}

}  // namespace

void FieldGrid::validate() const {
    if (!(x1_lo > 0.0) || !(x2_lo > 0.0)) throw_config("grid lower bounds must be positive");
    if (!(x1_hi > x1_lo) || !(x2_hi > x2_lo)) throw_config("grid upper bounds must exceed lower");
    if (resolution < 2) throw_config("grid resolution must be at least 2");
    if (!(truncation > 0.0)) throw_config("truncation magnitude must be positive");
}

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[static_cast<std::size_t>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    v.back() = hi;
    return v;
}

std::vector<FieldPoint> field_grid(FieldMethod method, math::Beta beta, const FieldGrid& grid,
                                   const std::optional<PilotParams>& pilot) {
    grid.validate();
    const std::vector<double> xs = linspace(grid.x1_lo, grid.x1_hi, grid.resolution);
    const std::vector<double> ys = linspace(grid.x2_lo, grid.x2_hi, grid.resolution);
    std::vector<FieldPoint> out;
    out.reserve(xs.size() * ys.size());
    for (double x1 : xs) {
        for (double x2 : ys) {
            auto [d1, d2] = field_at(method, beta, x1, x2, pilot);
            const double mag = std::hypot(d1, d2);
            if (mag > grid.truncation) {
                const double s = grid.truncation / mag;
                d1 *= s;
                d2 *= s;
            }
            out.push_back({x1, x2, d1, d2});
        }
    }
    return out;
}

Trajectory integrate_trajectory(FieldMethod method, math::Beta beta, math::RatioPoint start,
                                double step, int n_steps, const PilotRule& pilot_rule) {
    if (!(step > 0.0)) throw_invalid("integration step must be positive");
    Trajectory traj;
    double x1 = start.x1(), x2 = start.x2();
    traj.points.push_back({x1, x2});
    for (int i = 0; i < n_steps; ++i) {
        std::optional<PilotParams> pilot;
        if (method == FieldMethod::Pilot) {
            if (!pilot_rule) throw_config("pilot trajectory requires a pilot rule");
            auto y = pilot_rule(x1, x2);
            PilotParams pp;
            pp.fixed_y = true;
            pp.y1 = y[0];
            pp.y2 = y[1];
            pilot = pp;
        }
        auto [d1, d2] = field_at(method, beta, x1, x2, pilot);
        double h = step;
        // d1 >= 0 keeps x1 positive; only the x2 move can cross zero.
        while (x2 + h * d2 <= 0.0 || x1 + h * d1 <= 0.0) h *= 0.5;
        x1 += h * d1;
        x2 += h * d2;
        traj.points.push_back({x1, x2});
    }
    return traj;
}

Landscape fz_landscape(double z, Range p1, Range p2, int resolution, math::Beta beta) {
    if (!(p1.lo > 0.0) || !(p2.lo > 0.0)) throw_config("landscape ranges must be positive");
    if (!(p1.hi > p1.lo) || !(p2.hi > p2.lo)) throw_config("landscape ranges must be nonempty");
    if (resolution < 2) throw_config("landscape resolution must be at least 2");
    if (!(z > 0.0)) throw_config("z must be positive");
    Landscape ls;
    ls.res_a = resolution;
    ls.res_b = resolution;
    ls.a = linspace(p1.lo, p1.hi, resolution);
    ls.b = linspace(p2.lo, p2.hi, resolution);
    ls.values.reserve(ls.a.size() * ls.b.size());
    for (double pa : ls.a)
        for (double pb : ls.b) ls.values.push_back(math::f_z(z, pa, pb, beta));
    return ls;
}

Landscape partial_landscape(PartialAxis which, Range x_axis, Range y_axis, int resolution,
                            math::Beta beta) {
    if (!(x_axis.lo > 0.0) || !(y_axis.lo > 0.0)) throw_config("landscape ranges must be positive");
    if (!(x_axis.hi > x_axis.lo) || !(y_axis.hi > y_axis.lo))
        throw_config("landscape ranges must be nonempty");
    if (resolution < 2) throw_config("landscape resolution must be at least 2");
    Landscape ls;
    ls.res_a = resolution;
    ls.res_b = resolution;
    ls.a = linspace(x_axis.lo, x_axis.hi, resolution);
    ls.b = linspace(y_axis.lo, y_axis.hi, resolution);
    ls.values.reserve(ls.a.size() * ls.b.size());
    for (double xa : ls.a) {
        for (double yb : ls.b) {
            const double v = (which == PartialAxis::ChosenPartial)
                                 ? math::pilot_partial_x1(xa, yb, beta)
                                 : math::pilot_partial_x2(xa, yb, beta);
            ls.values.push_back(v);
        }
    }
    return ls;
}

void write_field_csv(const std::vector<FieldPoint>& points, const std::string& path) {
    std::string body = "x1,x2,dx1,dx2\n";
    char buf[256];
    for (const FieldPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", p.x1, p.x2, p.dx1, p.dx2);
        body += buf;
    }
    atomic_write(path, body);
}

void write_landscape_csv(const Landscape& ls, const std::string& path) {
    std::string body = "a,b,value\n";
    char buf[256];
    for (int ia = 0; ia < ls.res_a; ++ia) {
        for (int ib = 0; ib < ls.res_b; ++ib) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                          ls.a[static_cast<std::size_t>(ia)], ls.b[static_cast<std::size_t>(ib)],
                          ls.values[static_cast<std::size_t>(ia * ls.res_b + ib)]);
            body += buf;
        }
    }
    atomic_write(path, body);
}

}  // namespace prefopt::flow
