#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tcca/metrics.hpp"

namespace tcca {

// Columns metric,alpha,beta,value. One "moc" row per (alpha, beta), five
// segmentation rows per alpha (beta left empty), and three mAP rows when
// present (alpha and beta empty).
std::string metrics_csv(const MetricsReport& report);
nlohmann::json metrics_json(const MetricsReport& report);

// Names for the augmented label set: a0..a{C-1}, EOS, START, END.
std::vector<std::string> augmented_label_names(int classes);

// Row-wise exp-normalized (C+3) x (C+3) transitions with a header row of
// label names and the source label leading each row.
std::string transitions_csv(const Matrix& transitions, int classes);

// Heat map of a row-stochastic matrix: one rect per cell, white to dark
// blue by probability.
std::string transitions_svg(const Matrix& probabilities, const std::vector<std::string>& labels);

std::string format_double(double v);

}  // namespace tcca
