#ifndef DEMS_PLOT_HPP
#define DEMS_PLOT_HPP

#include <string>
#include <utility>
#include <vector>

namespace dems {

// Minimal SVG renderers for the optional --plot outputs. CSV stays the
// canonical format; these are inspection conveniences.

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

// Line chart (loss curves, lambda trace, ...).
std::string svg_line_chart(const std::vector<PlotSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label);

// Bland-Altman scatter with mean and limits-of-agreement rules.
std::string svg_agreement_scatter(const std::vector<std::pair<double, double>>& points,
                                  double mean_diff, double loa_low, double loa_high,
                                  const std::string& title);

}  // namespace dems

#endif
