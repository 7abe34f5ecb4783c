#include "cfcd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "cfcd/errors.hpp"

namespace cfcd {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMargin = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmin <= xmax)) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double x) {
        return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin);
    };
    auto py = [&](double y) {
        return kHeight - kMargin - (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin);
    };

    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<!-- data\n";
    for (const auto& s : series) {
        out << "series: " << s.name << "\n";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << num(s.x[i]) << "\t" << num(s.y[i]) << "\n";
    }
    out << "-->\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << escape(title) << "</text>\n";
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\""
        << kWidth - kMargin << "\" y2=\"" << kHeight - kMargin
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin
        << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << kHeight / 2
        << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
        << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double fx = xmin + (xmax - xmin) * tick / 4.0;
        const double fy = ymin + (ymax - ymin) * tick / 4.0;
        out << "<text x=\"" << px(fx) << "\" y=\"" << kHeight - kMargin + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << num(fx) << "</text>\n";
        out << "<text x=\"" << kMargin - 6 << "\" y=\"" << py(fy) + 3
            << "\" text-anchor=\"end\" font-size=\"10\">" << num(fy) << "</text>\n";
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << kWidth - kMargin + 4 << "\" y=\"" << kMargin + 14 * (si + 1)
            << "\" font-size=\"11\" fill=\"" << color << "\" text-anchor=\"end\">"
            << escape(s.name) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void write_svg(const std::string& svg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open svg file for writing: " + path);
    out << svg;
}

}  // namespace cfcd
