#include "camel/evalkit.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace camel::eval {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) {
    throw ConfigError("confusion: " + std::to_string(predicted.size()) + " predictions vs " +
                      std::to_string(truth.size()) + " labels");
  }
  if (predicted.empty()) throw ConfigError("confusion: no labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] == Label::CA, t = truth[i] == Label::CA;
    if (p && t) ++cm.tp;
    else if (p) ++cm.fp;
    else if (t) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.sensitivity = ratio(cm.tp, cm.tp + cm.fn);
  m.specificity = ratio(cm.tn, cm.tn + cm.fp);
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  m.iou = ratio(cm.tp, cm.tp + cm.fp + cm.fn);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  return m;
}

ConfusionMatrix pixel_confusion(const Mask& predicted, const Mask& truth) {
  if (predicted.shape() != truth.shape()) {
    throw ConfigError("pixel_metrics: mask shapes " + shape_string(predicted.shape()) + " and " +
                      shape_string(truth.shape()) + " differ");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++cm.tp;
    else if (p) ++cm.fp;
    else if (t) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

Metrics pixel_metrics(const Mask& predicted, const Mask& truth) { return metrics(pixel_confusion(predicted, truth)); }

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

std::optional<double> parse_cell(const std::string& s) {
  if (s == "NA") return std::nullopt;
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw IoError("report: bad numeric cell '" + s + "'");
  }
}

}  // namespace

std::string render_report(std::span<const ReportRow> rows, const ReportOptions& options) {
  if (rows.empty()) throw ConfigError("report: no rows");
  std::string out = "name,sensitivity,specificity,accuracy,f1,iou";
  if (options.include_precision) out += ",precision";
  out += "\n";
  for (const auto& r : rows) {
    if (r.name.find_first_of(",\n") != std::string::npos) throw ConfigError("report: row name contains a separator");
    const Metrics& m = r.metrics;
    out += r.name + "," + cell(m.sensitivity) + "," + cell(m.specificity) + "," + cell(m.accuracy) + "," + cell(m.f1) +
           "," + cell(m.iou);
    if (options.include_precision) out += "," + cell(m.precision);
    out += "\n";
  }
  return out;
}

void report(std::span<const ReportRow> rows, const std::filesystem::path& path, const ReportOptions& options) {
  const std::string text = render_report(rows, options);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << text;
  if (!out) throw IoError("failed writing report " + path.string());
}

std::vector<ReportRow> parse_report(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.rfind("name,sensitivity,specificity,accuracy,f1,iou", 0) != 0) {
    throw IoError("report: missing header");
  }
  const bool precision = line.find(",precision") != std::string::npos;
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() != (precision ? 7u : 6u)) throw IoError("report: wrong column count in '" + line + "'");
    ReportRow r;
    r.name = cells[0];
    r.metrics.sensitivity = parse_cell(cells[1]);
    r.metrics.specificity = parse_cell(cells[2]);
    r.metrics.accuracy = parse_cell(cells[3]);
    r.metrics.f1 = parse_cell(cells[4]);
    r.metrics.iou = parse_cell(cells[5]);
    if (precision) r.metrics.precision = parse_cell(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing report " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

}  // namespace camel::eval
