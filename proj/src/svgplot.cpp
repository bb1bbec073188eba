#include "iclab/svgplot.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <string>

#include "iclab/errors.hpp"

namespace iclab::svg {

namespace {

constexpr double kMarginLeft = 72.0;
constexpr double kMarginRight = 24.0;
constexpr double kMarginTop = 42.0;
constexpr double kMarginBottom = 56.0;

constexpr std::array<const char*, 6> kPalette = {"#1f6fb2", "#d1495b", "#3f8f4a",
                                                "#8a5fbf", "#c98a1e", "#3aa6a6"};

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

// pixel coordinate, two decimals, locale-independent
std::string px(double v) {
    std::array<char, 48> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                   std::chars_format::fixed, 2);
    return std::string(buf.data(), res.ptr);
}

// tick label: shortest round-trip, readable for the usual magnitudes
std::string tick_text(double v) {
    if (v == 0.0) return "0";
    std::array<char, 48> buf;
    const double a = std::abs(v);
    if (a >= 1e-4 && a < 1e6) {
        const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        return std::string(buf.data(), res.ptr);
    }
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                   std::chars_format::scientific, 2);
    return std::string(buf.data(), res.ptr);
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

struct Layout {
    PlotSpec spec;
    Range x;  // in plot space (log10 applied when log-scaled)
    Range y;
    double plot_w = 0.0;
    double plot_h = 0.0;

    double sx(double v) const {
        return kMarginLeft + (v - x.lo) / (x.hi - x.lo) * plot_w;
    }
    double sy(double v) const {
        return kMarginTop + plot_h - (v - y.lo) / (y.hi - y.lo) * plot_h;
    }
};

double to_plot(double v, bool log_scale, const char* axis) {
    if (!std::isfinite(v)) fail(std::string("plot: non-finite ") + axis + " value");
    if (!log_scale) return v;
    if (v <= 0.0) fail(std::string("plot: log-scale ") + axis + " axis requires positive values");
    return std::log10(v);
}

void widen_if_degenerate(Range& r) {
    if (r.hi > r.lo) {
        const double pad = 0.05 * (r.hi - r.lo);
        r.lo -= pad;
        r.hi += pad;
        return;
    }
    const double pad = std::max(0.5, std::abs(r.lo) * 0.1);
    r.lo -= pad;
    r.hi += pad;
}

Layout make_layout(const std::vector<Series>& series, const PlotSpec& spec) {
    if (series.empty()) fail("plot: no series");
    std::size_t points = 0;
    Range rx{1e308, -1e308}, ry{1e308, -1e308};
    for (const Series& s : series) {
        if (s.x.size() != s.y.size()) fail("plot: series \"" + s.label + "\" has mismatched x/y");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double X = to_plot(s.x[i], spec.log_x, "x");
            const double Y = to_plot(s.y[i], spec.log_y, "y");
            rx.lo = std::min(rx.lo, X);
            rx.hi = std::max(rx.hi, X);
            ry.lo = std::min(ry.lo, Y);
            ry.hi = std::max(ry.hi, Y);
            ++points;
        }
    }
    if (points == 0) fail("plot: no data points");
    if (spec.width < 200.0 || spec.height < 150.0) fail("plot: canvas too small");
    widen_if_degenerate(rx);
    widen_if_degenerate(ry);
    Layout lay{spec, rx, ry, spec.width - kMarginLeft - kMarginRight,
               spec.height - kMarginTop - kMarginBottom};
    return lay;
}

// ~`target` ticks at 1/2/5 x 10^k steps
std::vector<double> nice_ticks(const Range& r, int target) {
    const double span = r.hi - r.lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    }
    std::vector<double> ticks;
    const double first = std::ceil(r.lo / step) * step;
    for (double t = first; t <= r.hi + 1e-9 * span; t += step) {
        const double snapped = std::abs(t) < step * 1e-9 ? 0.0 : t;
        ticks.push_back(snapped);
    }
    return ticks;
}

// log axis: integer decades when they fit, nice ticks on the exponent otherwise
std::vector<double> log_ticks(const Range& r) {
    std::vector<double> ticks;
    const double lo = std::ceil(r.lo - 1e-9);
    const double hi = std::floor(r.hi + 1e-9);
    if (hi >= lo && hi - lo <= 12.0) {
        for (double e = lo; e <= hi + 0.5; e += std::max(1.0, std::floor((hi - lo) / 6.0)))
            ticks.push_back(e);
        if (!ticks.empty()) return ticks;
    }
    return nice_ticks(r, 5);
}

void open_svg(std::string& out, const Layout& lay) {
    const PlotSpec& spec = lay.spec;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(spec.width) +
           "\" height=\"" + px(spec.height) + "\" viewBox=\"0 0 " + px(spec.width) + " " +
           px(spec.height) + "\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + px(spec.width) + "\" height=\"" +
           px(spec.height) + "\" fill=\"#ffffff\"/>\n";
    if (!spec.title.empty())
        out += "<text x=\"" + px(spec.width / 2) +
               "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\" "
               "fill=\"#222222\">" +
               escape_xml(spec.title) + "</text>\n";
}

void draw_axes(std::string& out, const Layout& lay) {
    const PlotSpec& spec = lay.spec;
    const double x0 = kMarginLeft, x1 = kMarginLeft + lay.plot_w;
    const double y0 = kMarginTop, y1 = kMarginTop + lay.plot_h;

    const std::vector<double> xt = spec.log_x ? log_ticks(lay.x) : nice_ticks(lay.x, 6);
    const std::vector<double> yt = spec.log_y ? log_ticks(lay.y) : nice_ticks(lay.y, 5);

    for (double t : xt) {
        const double X = lay.sx(t);
        out += "<line x1=\"" + px(X) + "\" y1=\"" + px(y0) + "\" x2=\"" + px(X) + "\" y2=\"" +
               px(y1) + "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
        const double value = spec.log_x ? std::pow(10.0, t) : t;
        out += "<text x=\"" + px(X) + "\" y=\"" + px(y1 + 18.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
               "fill=\"#444444\">" +
               escape_xml(tick_text(value)) + "</text>\n";
    }
    for (double t : yt) {
        const double Y = lay.sy(t);
        out += "<line x1=\"" + px(x0) + "\" y1=\"" + px(Y) + "\" x2=\"" + px(x1) + "\" y2=\"" +
               px(Y) + "\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>\n";
        const double value = spec.log_y ? std::pow(10.0, t) : t;
        out += "<text x=\"" + px(x0 - 8.0) + "\" y=\"" + px(Y + 4.0) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
               "fill=\"#444444\">" +
               escape_xml(tick_text(value)) + "</text>\n";
    }

    out += "<line x1=\"" + px(x0) + "\" y1=\"" + px(y1) + "\" x2=\"" + px(x1) + "\" y2=\"" +
           px(y1) + "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
    out += "<line x1=\"" + px(x0) + "\" y1=\"" + px(y0) + "\" x2=\"" + px(x0) + "\" y2=\"" +
           px(y1) + "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";

    if (!spec.x_label.empty())
        out += "<text x=\"" + px(x0 + lay.plot_w / 2) + "\" y=\"" + px(y1 + 40.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
               "fill=\"#222222\">" +
               escape_xml(spec.x_label) + "</text>\n";
    if (!spec.y_label.empty())
        out += "<text x=\"18\" y=\"" + px(y0 + lay.plot_h / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
               "fill=\"#222222\" transform=\"rotate(-90 18 " + px(y0 + lay.plot_h / 2) +
               ")\">" + escape_xml(spec.y_label) + "</text>\n";
}

void draw_identity_line(std::string& out, const Layout& lay) {
    if (!lay.spec.y_equals_x) return;
    // only drawable when both axes live in the same plot space
    if (lay.spec.log_x != lay.spec.log_y) return;
    const double t0 = std::max(lay.x.lo, lay.y.lo);
    const double t1 = std::min(lay.x.hi, lay.y.hi);
    if (t0 >= t1) return;
    out += "<line x1=\"" + px(lay.sx(t0)) + "\" y1=\"" + px(lay.sy(t0)) + "\" x2=\"" +
           px(lay.sx(t1)) + "\" y2=\"" + px(lay.sy(t1)) +
           "\" stroke=\"#888888\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\"/>\n";
}

void draw_legend(std::string& out, const Layout& lay, const std::vector<Series>& series) {
    bool any_label = false;
    for (const Series& s : series) any_label |= !s.label.empty();
    if (!any_label || series.size() < 2) return;
    const double x = kMarginLeft + lay.plot_w - 150.0;
    double y = kMarginTop + 10.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % kPalette.size()];
        out += "<rect x=\"" + px(x) + "\" y=\"" + px(y) +
               "\" width=\"14\" height=\"4\" fill=\"" + color + "\"/>\n";
        out += "<text x=\"" + px(x + 20.0) + "\" y=\"" + px(y + 6.0) +
               "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222222\">" +
               escape_xml(series[i].label) + "</text>\n";
        y += 18.0;
    }
}

std::string render(const std::vector<Series>& series, const PlotSpec& spec, bool as_lines) {
    const Layout lay = make_layout(series, spec);
    std::string out;
    open_svg(out, lay);
    draw_axes(out, lay);
    draw_identity_line(out, lay);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& s = series[i];
        const char* color = kPalette[i % kPalette.size()];
        if (as_lines) {
            if (s.x.empty()) continue;
            out += "<polyline fill=\"none\" stroke=\"";
            out += color;
            out += "\" stroke-width=\"1.8\" points=\"";
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                if (k > 0) out.push_back(' ');
                out += px(lay.sx(to_plot(s.x[k], spec.log_x, "x"))) + "," +
                       px(lay.sy(to_plot(s.y[k], spec.log_y, "y")));
            }
            out += "\"/>\n";
        } else {
            for (std::size_t k = 0; k < s.x.size(); ++k) {
                out += "<circle cx=\"" + px(lay.sx(to_plot(s.x[k], spec.log_x, "x"))) +
                       "\" cy=\"" + px(lay.sy(to_plot(s.y[k], spec.log_y, "y"))) +
                       "\" r=\"2.5\" fill=\"";
                out += color;
                out += "\" fill-opacity=\"0.55\"/>\n";
            }
        }
    }
    draw_legend(out, lay, series);
    out += "</svg>\n";
    return out;
}

}  // namespace

std::string line_plot(const std::vector<Series>& series, const PlotSpec& spec) {
    return render(series, spec, /*as_lines=*/true);
}

std::string scatter_plot(const std::vector<Series>& series, const PlotSpec& spec) {
    return render(series, spec, /*as_lines=*/false);
}

}  // namespace iclab::svg
