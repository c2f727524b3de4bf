#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camel/image.hpp"

namespace camel::eval {

/// CA is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// A metric whose denominator is zero is std::nullopt ("NA" in reports).
struct Metrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> accuracy;
  std::optional<double> f1;
  std::optional<double> iou;
  std::optional<double> precision;
};

ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> truth);
Metrics metrics(const ConfusionMatrix& cm);

ConfusionMatrix pixel_confusion(const Mask& predicted, const Mask& truth);
Metrics pixel_metrics(const Mask& predicted, const Mask& truth);

struct ReportRow {
  std::string name;
  Metrics metrics;
};

struct ReportOptions {
  bool include_precision = false;
};

/// CSV "name,sensitivity,specificity,accuracy,f1,iou[,precision]", 4 decimals,
/// undefined values as NA, rows in the given order.
std::string render_report(std::span<const ReportRow> rows, const ReportOptions& options = {});
void report(std::span<const ReportRow> rows, const std::filesystem::path& path, const ReportOptions& options = {});
std::vector<ReportRow> parse_report(const std::string& csv);
std::vector<ReportRow> read_report(const std::filesystem::path& path);

}  // namespace camel::eval
