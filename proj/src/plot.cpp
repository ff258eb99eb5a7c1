#include "dems/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dems {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 440;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 55;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void expand(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        } else {
            const double margin = 0.05 * (hi - lo);
            lo -= margin;
            hi += margin;
        }
    }
};

double map_x(double v, const Range& r) {
    return kMarginLeft + (v - r.lo) / (r.hi - r.lo) * (kWidth - kMarginLeft - kMarginRight);
}

double map_y(double v, const Range& r) {
    return kHeight - kMarginBottom -
           (v - r.lo) / (r.hi - r.lo) * (kHeight - kMarginTop - kMarginBottom);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

void draw_frame(std::ostringstream& svg, const Range& xr, const Range& yr,
                const std::string& title, const std::string& x_label,
                const std::string& y_label) {
    svg << "<rect width='" << kWidth << "' height='" << kHeight << "' fill='white'/>\n";
    svg << "<text x='" << kWidth / 2 << "' y='24' font-size='16' text-anchor='middle'>" << title
        << "</text>\n";
    // axes
    svg << "<line x1='" << kMarginLeft << "' y1='" << kHeight - kMarginBottom << "' x2='"
        << kWidth - kMarginRight << "' y2='" << kHeight - kMarginBottom
        << "' stroke='black'/>\n";
    svg << "<line x1='" << kMarginLeft << "' y1='" << kMarginTop << "' x2='" << kMarginLeft
        << "' y2='" << kHeight - kMarginBottom << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double tx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double ty = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        svg << "<text x='" << map_x(tx, xr) << "' y='" << kHeight - kMarginBottom + 18
            << "' font-size='11' text-anchor='middle'>" << fmt(tx) << "</text>\n";
        svg << "<text x='" << kMarginLeft - 8 << "' y='" << map_y(ty, yr) + 4
            << "' font-size='11' text-anchor='end'>" << fmt(ty) << "</text>\n";
        svg << "<line x1='" << kMarginLeft << "' y1='" << map_y(ty, yr) << "' x2='"
            << kWidth - kMarginRight << "' y2='" << map_y(ty, yr)
            << "' stroke='#dddddd' stroke-width='0.5'/>\n";
    }
    svg << "<text x='" << (kWidth + kMarginLeft) / 2 << "' y='" << kHeight - 12
        << "' font-size='13' text-anchor='middle'>" << x_label << "</text>\n";
    svg << "<text x='18' y='" << kHeight / 2
        << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 " << kHeight / 2
        << ")'>" << y_label << "</text>\n";
}

}  // namespace

std::string svg_line_chart(const std::vector<PlotSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
    Range xr{1e300, -1e300}, yr{1e300, -1e300};
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            xr.expand(x);
            yr.expand(y);
        }
    }
    xr.pad();
    yr.pad();

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='"
        << kHeight << "'>\n";
    draw_frame(svg, xr, yr, title, x_label, y_label);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto* color = kPalette[i % 6];
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.4' points='";
        for (const auto& [x, y] : series[i].points) {
            svg << fmt(map_x(x, xr)) << "," << fmt(map_y(y, yr)) << " ";
        }
        svg << "'/>\n";
        svg << "<text x='" << kWidth - kMarginRight - 8 << "' y='"
            << kMarginTop + 16 * (i + 1) << "' font-size='12' text-anchor='end' fill='" << color
            << "'>" << series[i].label << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string svg_agreement_scatter(const std::vector<std::pair<double, double>>& points,
                                  double mean_diff, double loa_low, double loa_high,
                                  const std::string& title) {
    Range xr{1e300, -1e300}, yr{1e300, -1e300};
    for (const auto& [x, y] : points) {
        xr.expand(x);
        yr.expand(y);
    }
    yr.expand(loa_low);
    yr.expand(loa_high);
    xr.pad();
    yr.pad();

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='"
        << kHeight << "'>\n";
    draw_frame(svg, xr, yr, title, "mean of prediction and GT (% of canvas)",
               "prediction - GT (% of canvas)");

    const auto rule = [&](double y, const char* color, const std::string& label) {
        svg << "<line x1='" << kMarginLeft << "' y1='" << map_y(y, yr) << "' x2='"
            << kWidth - kMarginRight << "' y2='" << map_y(y, yr) << "' stroke='" << color
            << "' stroke-dasharray='6,4'/>\n";
        svg << "<text x='" << kWidth - kMarginRight - 4 << "' y='" << map_y(y, yr) - 4
            << "' font-size='11' text-anchor='end' fill='" << color << "'>" << label
            << "</text>\n";
    };
    rule(mean_diff, "#1f77b4", "mean " + fmt(mean_diff));
    rule(loa_low, "#d62728", "LOA " + fmt(loa_low));
    rule(loa_high, "#d62728", "LOA " + fmt(loa_high));

    for (const auto& [x, y] : points) {
        svg << "<circle cx='" << fmt(map_x(x, xr)) << "' cy='" << fmt(map_y(y, yr))
            << "' r='3.2' fill='#2ca02c' fill-opacity='0.75'/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace dems
