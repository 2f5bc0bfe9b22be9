#pragma once

#include <string>
#include <vector>

namespace graphtok3d {

struct LossCurve {
    std::string label;
    std::vector<double> losses;  // one value per epoch
};

struct AccuracyBar {
    std::string label;
    double accuracy = 0;
};

// Standalone SVG: loss curves on the left, accuracy bars on the right.
// Output depends only on the inputs.
std::string training_report_svg(const std::vector<LossCurve>& curves, const std::vector<AccuracyBar>& bars);

}  // namespace graphtok3d
