#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/math.hpp"

namespace prefopt::flow {

enum class FieldMethod { Dpo, Pilot };

struct FieldGrid {
    double x1_lo = 0.05, x1_hi = 1.5;
    double x2_lo = 0.05, x2_hi = 1.5;
    int resolution = 30;      // points per axis
    double truncation = 1.5;  // clamp on the vector magnitude

    void validate() const;
};

// Guide-window parameters for the pilot field: either fixed (y1, y2), or
// fixed residuals (p1, p2) with y derived from the grid point as y = x / p.
struct PilotParams {
    bool fixed_y = true;
    double y1 = 1.0, y2 = 1.0;
    double p1 = 1.0, p2 = 1.0;
};

// Ascent direction of the per-example objective: dx1 >= 0, dx2 <= 0.
struct FieldPoint {
    double x1 = 0.0, x2 = 0.0;
    double dx1 = 0.0, dx2 = 0.0;
};

std::vector<FieldPoint> field_grid(FieldMethod method, math::Beta beta, const FieldGrid& grid,
                                   const std::optional<PilotParams>& pilot = std::nullopt);

using PilotRule = std::function<std::array<double, 2>(double x1, double x2)>;

struct Trajectory {
    std::vector<std::array<double, 2>> points;  // (x1, x2), includes the start
};

// Explicit-Euler ascent path. Positivity is kept by halving the step size
// whenever an update would leave the positive quadrant.
Trajectory integrate_trajectory(FieldMethod method, math::Beta beta, math::RatioPoint start,
                                double step, int n_steps, const PilotRule& pilot_rule = {});

struct Range {
    double lo = 0.0, hi = 0.0;
};

// Row-major scalar field over two axes.
struct Landscape {
    std::vector<double> a;       // axis values (size res_a)
    std::vector<double> b;       // axis values (size res_b)
    std::vector<double> values;  // res_a * res_b, index = ia * res_b + ib
    int res_a = 0, res_b = 0;
};

// f(z) over (p1, p2) at a fixed z.
Landscape fz_landscape(double z, Range p1, Range p2, int resolution, math::Beta beta);

enum class PartialAxis {
    ChosenPartial,    // d l / d x1 over axes (x1, y2)
    RejectedPartial,  // d l / d x2 over axes (x2, y1)
};

Landscape partial_landscape(PartialAxis which, Range x_axis, Range y_axis, int resolution,
                            math::Beta beta);

// x1,x2,dx1,dx2 rows; deterministic %.17g formatting.
void write_field_csv(const std::vector<FieldPoint>& points, const std::string& path);

// a,b,value rows.
void write_landscape_csv(const Landscape& ls, const std::string& path);

std::vector<double> linspace(double lo, double hi, int count);

}  // namespace prefopt::flow
