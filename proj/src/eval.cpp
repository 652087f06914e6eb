#include "vcd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vcd/error.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "eval";

std::string encode_confusion(const Confusion& c) {
  std::string out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i) out += ';';
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      if (j) out += ',';
      out += std::to_string(c[i][j]);
    }
  }
  return out;
}

Confusion decode_confusion(const std::string& text) {
  Confusion c;
  std::stringstream rows(text);
  std::string row;
  while (std::getline(rows, row, ';')) {
    std::vector<std::size_t> values;
    std::stringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) values.push_back(std::stoull(cell));
    c.push_back(std::move(values));
  }
  for (const auto& r : c) {
    if (r.size() != c.size()) throw Error(kModule, "malformed_report", "confusion matrix is not square");
  }
  return c;
}

std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << round_half_even(v, 2);
  return s.str();
}

std::string signed2(double v) {
  const double r = round_half_even(v, 2);
  return (r >= 0 ? "+" : "") + fixed2(r);
}

}  // namespace

std::size_t Metrics::count() const {
  std::size_t n = 0;
  for (const auto& row : confusion) n = std::accumulate(row.begin(), row.end(), n);
  return n;
}

Metrics metrics_from_confusion(const Confusion& confusion) {
  const std::size_t c = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != c) throw Error(kModule, "invalid_confusion", "confusion matrix is not square");
  }
  Metrics m;
  m.confusion = confusion;
  const std::size_t total = m.count();
  if (total == 0) throw Error(kModule, "empty_split", "no evaluated records");

  std::size_t trace = 0;
  double precision_sum = 0.0, recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    trace += confusion[k][k];
    const std::size_t true_k = std::accumulate(confusion[k].begin(), confusion[k].end(), std::size_t{0});
    if (true_k == 0) continue;
    std::size_t predicted_k = 0;
    for (std::size_t i = 0; i < c; ++i) predicted_k += confusion[i][k];
    ++present;
    recall_sum += static_cast<double>(confusion[k][k]) / static_cast<double>(true_k);
    if (predicted_k > 0) precision_sum += static_cast<double>(confusion[k][k]) / static_cast<double>(predicted_k);
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  m.macro_precision = precision_sum / static_cast<double>(present);
  m.macro_recall = recall_sum / static_cast<double>(present);
  return m;
}

Metrics evaluate(const ClassifierModel& model, const Dataset& data, const FeatureTable& features,
                 Split split) {
  if (data.labels() != model.labels) {
    throw Error(kModule, "label_mismatch",
                "model labels " + model.labels.to_string() + " differ from dataset labels " +
                    data.labels().to_string());
  }
  const std::size_t c = model.labels.size();
  Confusion confusion(c, std::vector<std::size_t>(c, 0));
  std::size_t seen = 0;
  for (const auto& rec : data) {
    if (rec.split != split) continue;
    if (!rec.provenance.is_natural()) {
      throw Error(kModule, "modified_provenance",
                  "record '" + rec.id + "' in " + std::string(to_string(split)) + " split has " +
                      rec.provenance.to_string() + " provenance; evaluation data must be unmodified",
                  rec.id);
    }
    auto it = features.find(rec.id);
    if (it == features.end()) {
      throw Error(kModule, "missing_features", "no features for record '" + rec.id + "'", rec.id);
    }
    Prediction p;
    try {
      p = predict(model, it->second);
    } catch (const Error& e) {
      throw Error(kModule, e.code(), "record '" + rec.id + "': " + e.message(), rec.id);
    }
    ++confusion[data.label_index(rec)][p.index];
    ++seen;
  }
  if (seen == 0) {
    throw Error(kModule, "empty_split", "no records in " + std::string(to_string(split)) + " split");
  }
  return metrics_from_confusion(confusion);
}

std::vector<std::pair<std::string, Metrics>> evaluate_by_domain(const ClassifierModel& model,
                                                                const Dataset& data,
                                                                const FeatureTable& features,
                                                                Split split) {
  std::vector<std::string> domains;
  std::map<std::string, Dataset> parts;
  for (const auto& rec : data) {
    if (rec.split != split) continue;
    auto [it, inserted] = parts.try_emplace(rec.domain, data.labels());
    if (inserted) domains.push_back(rec.domain);
    it->second.add(rec);
  }
  if (domains.empty()) {
    throw Error(kModule, "empty_split", "no records in " + std::string(to_string(split)) + " split");
  }
  std::vector<std::pair<std::string, Metrics>> out;
  for (const auto& d : domains) out.emplace_back(d, evaluate(model, parts.at(d), features, split));
  return out;
}

double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const double x = value * scale;
  const double lower = std::floor(x);
  const double frac = x - lower;
  double r;
  if (std::abs(frac - 0.5) <= 1e-9 * std::max(1.0, std::abs(x))) {
    r = std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
  } else {
    r = std::round(x);
  }
  return r / scale;
}

double relative_delta(double candidate, double baseline) {
  if (!(baseline > 0.0)) {
    throw Error(kModule, "nonpositive_baseline", "baseline accuracy must be positive");
  }
  return 100.0 * (candidate - baseline) / baseline;
}

double mean_accuracy(std::span<const double> accuracies) {
  if (accuracies.empty()) throw Error(kModule, "no_domains", "no domains to average");
  return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
}

DomainReport domain_report(std::vector<std::pair<std::string, Metrics>> per_domain,
                           std::optional<std::pair<std::string, Metrics>> in_domain,
                           const DomainReport* baseline, std::string title) {
  if (per_domain.empty()) throw Error(kModule, "no_domains", "report needs at least one domain");
  DomainReport r;
  r.title = std::move(title);
  r.in_domain = std::move(in_domain);
  r.per_domain = std::move(per_domain);
  std::vector<double> acc;
  for (const auto& [name, m] : r.per_domain) acc.push_back(100.0 * m.accuracy);
  r.average_accuracy = mean_accuracy(acc);

  if (baseline) {
    std::set<std::string> ours, theirs;
    for (const auto& d : r.per_domain) ours.insert(d.first);
    for (const auto& d : baseline->per_domain) theirs.insert(d.first);
    if (ours != theirs || r.in_domain.has_value() != baseline->in_domain.has_value() ||
        (r.in_domain && r.in_domain->first != baseline->in_domain->first)) {
      throw Error(kModule, "domain_mismatch", "baseline report covers different domains");
    }
    if (r.in_domain) {
      const double c = 100.0 * r.in_domain->second.accuracy;
      const double b = 100.0 * baseline->in_domain->second.accuracy;
      r.deltas.push_back({"in_domain", c, b, relative_delta(c, b)});
    }
    r.deltas.push_back({"average", r.average_accuracy, baseline->average_accuracy,
                        relative_delta(r.average_accuracy, baseline->average_accuracy)});
  }
  return r;
}

std::string report_json(const DomainReport& report) {
  nlohmann::ordered_json j;
  j["header.backbone"] = kBackboneNote;
  j["header.averaging"] = kAveragingNote;
  j["title"] = report.title;
  auto put = [&](const std::string& prefix, const Metrics& m) {
    j[prefix + ".accuracy"] = 100.0 * m.accuracy;
    j[prefix + ".macro_precision"] = 100.0 * m.macro_precision;
    j[prefix + ".macro_recall"] = 100.0 * m.macro_recall;
    j[prefix + ".count"] = m.count();
    j[prefix + ".confusion"] = encode_confusion(m.confusion);
  };
  if (report.in_domain) {
    j["in_domain.name"] = report.in_domain->first;
    put("in_domain", report.in_domain->second);
  }
  std::string names;
  for (const auto& [name, m] : report.per_domain) {
    names += (names.empty() ? "" : ",") + name;
    put("domain." + name, m);
  }
  j["domains"] = names;
  j["average_accuracy"] = report.average_accuracy;
  j["average_accuracy_rounded"] = round_half_even(report.average_accuracy, 2);
  for (const auto& d : report.deltas) {
    j["delta." + d.name] = d.value;
    j["delta." + d.name + ".rounded"] = round_half_even(d.value, 2);
    j["delta." + d.name + ".baseline"] = d.baseline;
  }
  return j.dump(2) + "\n";
}

DomainReport parse_report_json(std::string_view text) {
  using nlohmann::json;
  try {
    // Ordered so that deltas come back in the order they were written.
    const auto j = nlohmann::ordered_json::parse(text);
    auto metrics = [&](const std::string& prefix) {
      Metrics m = metrics_from_confusion(decode_confusion(j.at(prefix + ".confusion").get<std::string>()));
      return m;
    };
    DomainReport r;
    r.title = j.value("title", "");
    if (j.contains("in_domain.name")) {
      r.in_domain.emplace(j.at("in_domain.name").get<std::string>(), metrics("in_domain"));
    }
    std::stringstream names(j.at("domains").get<std::string>());
    std::string name;
    while (std::getline(names, name, ',')) r.per_domain.emplace_back(name, metrics("domain." + name));
    if (r.per_domain.empty()) throw Error(kModule, "malformed_report", "report lists no domains");
    r.average_accuracy = j.at("average_accuracy").get<double>();
    for (const auto& [key, value] : j.items()) {
      const std::string prefix = "delta.";
      if (key.rfind(prefix, 0) != 0 || key.find('.', prefix.size()) != std::string::npos) continue;
      Delta d;
      d.name = key.substr(prefix.size());
      d.value = value.get<double>();
      d.baseline = j.at(key + ".baseline").get<double>();
      d.candidate = d.name == "average" ? r.average_accuracy
                                        : (r.in_domain ? 100.0 * r.in_domain->second.accuracy : 0.0);
      r.deltas.push_back(d);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(kModule, "malformed_report", e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(kModule, "malformed_report", e.what());
  } catch (const std::out_of_range& e) {
    throw Error(kModule, "malformed_report", e.what());
  }
}

std::string report_table(const DomainReport& report) {
  std::vector<std::string> head, acc, prec, rec;
  auto column = [&](const std::string& name, const Metrics& m) {
    head.push_back(name);
    acc.push_back(fixed2(100.0 * m.accuracy));
    prec.push_back(fixed2(100.0 * m.macro_precision));
    rec.push_back(fixed2(100.0 * m.macro_recall));
  };
  if (report.in_domain) column(report.in_domain->first + " (in-domain)", report.in_domain->second);
  for (const auto& [name, m] : report.per_domain) column(name, m);
  head.push_back("Avg.");
  acc.push_back(fixed2(report.average_accuracy));
  prec.push_back("");
  rec.push_back("");
  for (const auto& d : report.deltas) {
    head.push_back("Delta " + d.name);
    acc.push_back(signed2(d.value));
    prec.push_back("");
    rec.push_back("");
  }

  std::vector<std::size_t> width(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) {
    width[i] = std::max({head[i].size(), acc[i].size(), std::size_t{6}});
  }
  std::ostringstream out;
  out << "# " << kBackboneNote << "\n# " << kAveragingNote << "\n";
  if (!report.title.empty()) out << "# " << report.title << "\n";
  auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
    out << std::left << std::setw(10) << label;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << " | " << std::right << std::setw(static_cast<int>(width[i])) << cells[i];
    }
    out << "\n";
  };
  line("", head);
  line("accuracy", acc);
  line("precision", prec);
  line("recall", rec);
  return out.str();
}

void save_report(const DomainReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& table_path) {
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(kModule, "write_failed", "cannot write " + p.string(), p.string());
    out << text;
  };
  write(json_path, report_json(report));
  write(table_path, report_table(report));
}

DomainReport load_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + json_path.string(), json_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_report_json(buf.str());
}

}  // namespace vcd
