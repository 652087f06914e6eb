#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vcd/classifier.hpp"
#include "vcd/core.hpp"
#include "vcd/features.hpp"

namespace vcd {

using Confusion = std::vector<std::vector<std::size_t>>;  // rows = true class

struct Metrics {
  double accuracy = 0.0;  // in [0, 1]
  /// Unweighted means over classes with at least one true instance.
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  Confusion confusion;

  std::size_t count() const;
};

/// A class never predicted contributes precision 0.
Metrics metrics_from_confusion(const Confusion& confusion);

/// Scores every record of `split`. Throws if the split is empty or holds a
/// resynthesized or augmented record: evaluation data stays unmodified.
Metrics evaluate(const ClassifierModel& model, const Dataset& data, const FeatureTable& features,
                 Split split);

/// Same, one entry per domain in first-seen order.
std::vector<std::pair<std::string, Metrics>> evaluate_by_domain(const ClassifierModel& model,
                                                                const Dataset& data,
                                                                const FeatureTable& features,
                                                                Split split);

/// Rounds to `decimals` places, ties to even. Values within 1e-9 (relative)
/// of a tie are treated as ties, so decimal inputs like 60.215 round as written.
double round_half_even(double value, int decimals = 2);

/// 100 * (candidate - baseline) / baseline, unrounded. Inputs in percent.
double relative_delta(double candidate, double baseline);

/// Unweighted mean of percentages.
double mean_accuracy(std::span<const double> accuracies);

struct Delta {
  std::string name;
  double candidate = 0.0;  // percent
  double baseline = 0.0;   // percent
  double value = 0.0;      // relative improvement, percent
};

/// One in-domain column (optional), the per-domain columns and their average.
struct DomainReport {
  std::string title;
  std::optional<std::pair<std::string, Metrics>> in_domain;
  std::vector<std::pair<std::string, Metrics>> per_domain;
  double average_accuracy = 0.0;  // percent, unrounded
  std::vector<Delta> deltas;
};

/// Averages per-domain accuracies; with `baseline`, adds "in_domain" and
/// "average" relative deltas. Throws on an empty domain list or if the
/// baseline covers a different set of domains.
DomainReport domain_report(std::vector<std::pair<std::string, Metrics>> per_domain,
                           std::optional<std::pair<std::string, Metrics>> in_domain = std::nullopt,
                           const DomainReport* baseline = nullptr, std::string title = {});

/// Declared in every report header.
inline constexpr const char* kBackboneNote =
    "backbone: mean-pooled features -> 1 hidden layer (tanh) -> softmax, standing in for "
    "self-supervised model fine-tuning";
inline constexpr const char* kAveragingNote =
    "precision/recall: macro average over classes with >= 1 true instance";

/// Flat JSON object ("domain.<name>.accuracy": ..., "average_accuracy": ...).
std::string report_json(const DomainReport& report);
DomainReport parse_report_json(std::string_view text);
/// Aligned text table: in-domain | per-domain ... | Avg. | deltas.
std::string report_table(const DomainReport& report);

void save_report(const DomainReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& table_path);
DomainReport load_report(const std::filesystem::path& json_path);

}  // namespace vcd
