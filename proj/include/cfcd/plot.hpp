#pragma once

#include <string>
#include <vector>

namespace cfcd {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Self-contained SVG line plot with the data table embedded in a comment.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series);

void write_svg(const std::string& svg, const std::string& path);

}  // namespace cfcd
