#include "tcca/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tcca/crf.hpp"

namespace tcca {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string short_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "metric,alpha,beta,value\n";
  for (const auto& [key, value] : report.moc)
    os << "moc," << short_double(key.first) << ',' << short_double(key.second) << ',' << format_double(value) << '\n';
  for (const auto& [alpha, s] : report.segmentation) {
    const std::pair<const char*, double> rows[] = {
        {"seg_acc", s.acc}, {"seg_edit", s.edit}, {"seg_f1_10", s.f1_10}, {"seg_f1_25", s.f1_25}, {"seg_f1_50", s.f1_50}};
    for (const auto& [name, value] : rows)
      os << name << ',' << short_double(alpha) << ",," << format_double(value) << '\n';
  }
  if (report.map) {
    os << "map_all,,," << format_double(report.map->all) << '\n';
    os << "map_freq,,," << format_double(report.map->freq) << '\n';
    os << "map_rare,,," << format_double(report.map->rare) << '\n';
  }
  return os.str();
}

nlohmann::json metrics_json(const MetricsReport& report) {
  nlohmann::json j;
  j["moc"] = nlohmann::json::array();
  for (const auto& [key, value] : report.moc)
    j["moc"].push_back({{"alpha", key.first}, {"beta", key.second}, {"value", value}});
  j["mean_moc"] = report.mean_moc();
  j["segmentation"] = nlohmann::json::array();
  for (const auto& [alpha, s] : report.segmentation)
    j["segmentation"].push_back({{"alpha", alpha},
                                 {"acc", s.acc},
                                 {"edit", s.edit},
                                 {"f1_10", s.f1_10},
                                 {"f1_25", s.f1_25},
                                 {"f1_50", s.f1_50}});
  if (report.map) j["map"] = {{"all", report.map->all}, {"freq", report.map->freq}, {"rare", report.map->rare}};
  return j;
}

std::vector<std::string> augmented_label_names(int classes) {
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) names.push_back("a" + std::to_string(c));
  names.insert(names.end(), {"EOS", "START", "END"});
  return names;
}

std::string transitions_csv(const Matrix& transitions, int classes) {
  const LabelSpace ls{classes};
  if (transitions.rows() != ls.augmented_size() || transitions.cols() != ls.augmented_size())
    throw InvalidArgument("transition matrix must be (C+3) x (C+3)");
  const Matrix p = exp_normalize_rows(transitions, ls.augmented_size());
  const auto names = augmented_label_names(classes);
  std::ostringstream os;
  os << "from";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    os << names[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < p.cols(); ++c) os << ',' << format_double(p(r, c));
    os << '\n';
  }
  return os.str();
}

std::string transitions_svg(const Matrix& probabilities, const std::vector<std::string>& labels) {
  if (probabilities.rows() != static_cast<Eigen::Index>(labels.size()) || probabilities.cols() != probabilities.rows())
    throw InvalidArgument("heat map needs a square matrix with one label per row");
  constexpr int cell = 28;
  constexpr int margin = 56;
  const int n = static_cast<int>(labels.size());
  const int size = margin + n * cell + 8;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
     << size << ' ' << size << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << size << "\" height=\"" << size << "\" fill=\"#ffffff\"/>\n";
  for (int i = 0; i < n; ++i) {
    const auto& name = labels[static_cast<std::size_t>(i)];
    os << "<text x=\"" << margin - 4 << "\" y=\"" << margin + i * cell + cell / 2 + 4
       << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" << name << "</text>\n";
    os << "<text x=\"" << margin + i * cell + cell / 2 << "\" y=\"" << margin - 6
       << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" << name << "</text>\n";
  }
  char color[8];
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double v = std::clamp(probabilities(r, c), 0.0, 1.0);
      // white (255,255,255) to (8,48,107)
      std::snprintf(color, sizeof color, "#%02x%02x%02x", static_cast<int>(std::lround(255 - v * 247)),
                    static_cast<int>(std::lround(255 - v * 207)), static_cast<int>(std::lround(255 - v * 148)));
      char value[16];
      std::snprintf(value, sizeof value, "%.4f", v);
      os << "<rect x=\"" << margin + c * cell << "\" y=\"" << margin + r * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"" << color << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"><title>"
         << labels[static_cast<std::size_t>(r)] << " -&gt; " << labels[static_cast<std::size_t>(c)] << ": " << value
         << "</title></rect>\n";
    }
  os << "</svg>\n";
  return os.str();
}

}  // namespace tcca
