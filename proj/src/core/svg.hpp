#pragma once

#include <string>
#include <vector>

#include "core/gradflow.hpp"

namespace prefopt::svg {

// Arrow plot of a vector field. Output is deterministic for fixed input.
void write_quiver(const std::vector<flow::FieldPoint>& points, const std::string& path);

// Colored-cell rendering of a scalar landscape.
void write_heatmap(const flow::Landscape& ls, const std::string& path);

}  // namespace prefopt::svg
