// Self-contained SVG emission for line and scatter plots: axes, nice ticks,
// optional log scales, a legend, and the y=x reference line for scatter
// plots. Output is deterministic text with no external dependencies.

#pragma once

#include <string>
#include <vector>

namespace iclab::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;  // same length as x
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    double width = 720.0;
    double height = 480.0;
    bool log_x = false;
    bool log_y = false;
    bool y_equals_x = false;  // dashed reference line where the view meets y=x
};

// polyline per series
std::string line_plot(const std::vector<Series>& series, const PlotSpec& spec);

// circle per point
std::string scatter_plot(const std::vector<Series>& series, const PlotSpec& spec);

}  // namespace iclab::svg
