#include "graphau/eval.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "graphau/errors.hpp"

using nlohmann::json;

namespace graphau {

long long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0ll);
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int categories) {
  if (preds.size() != labels.size()) throw LengthMismatchError(preds.size(), labels.size());
  ConfusionMatrix cm(categories);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = labels[i], p = preds[i];
    if (t < 0 || t >= categories || p < 0 || p >= categories)
      throw InvalidConfigError("category index out of range");
    ++cm.at(t, p);
  }
  return cm;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.categories <= 0) throw EmptyMatrixError();
  MetricsReport r;
  r.cm = cm;
  const int c = cm.categories;
  r.per_class.resize(static_cast<std::size_t>(c));
  long long diag_sum = 0;
  for (int j = 0; j < c; ++j) {
    long long col = 0, row = 0;
    for (int i = 0; i < c; ++i) {
      col += cm.at(i, j);
      row += cm.at(j, i);
    }
    const long long tp = cm.at(j, j);
    diag_sum += tp;
    auto& m = r.per_class[static_cast<std::size_t>(j)];
    if (col == 0) {
      m.zero_div_precision = true;
    } else {
      m.precision = 100.0 * static_cast<double>(tp) / static_cast<double>(col);
    }
    if (row == 0) {
      m.zero_div_recall = true;
    } else {
      m.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(row);
    }
    if (m.precision + m.recall == 0.0) {
      m.zero_div_f1 = true;
    } else {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
  }
  const long long total = cm.total();
  if (total == 0) throw EmptyMatrixError();
  r.accuracy = 100.0 * static_cast<double>(diag_sum) / static_cast<double>(total);
  for (const auto& m : r.per_class) {
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  r.macro_precision /= c;
  r.macro_recall /= c;
  r.macro_f1 /= c;
  return r;
}

std::string render_confusion_log10(const ConfusionMatrix& cm,
                                   const std::vector<std::string>& category_names) {
  static const char* kShades = " .:-=+*#%@";
  double max_log = 0;
  for (long long v : cm.counts)
    max_log = std::max(max_log, std::log10(1.0 + static_cast<double>(v)));
  std::ostringstream out;
  out << "confusion (rows=true, cols=pred), cells: log10(1+n) / raw\n";
  const int w = 12;
  out << std::string(10, ' ');
  for (int j = 0; j < cm.categories; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%*s", w, category_names[static_cast<std::size_t>(j)].c_str());
    out << buf;
  }
  out << "\n";
  for (int i = 0; i < cm.categories; ++i) {
    char head[32];
    std::snprintf(head, sizeof head, "%-10s", category_names[static_cast<std::size_t>(i)].c_str());
    std::string scaled_line = head, raw_line(10, ' ');
    for (int j = 0; j < cm.categories; ++j) {
      const long long n = cm.at(i, j);
      const double lg = std::log10(1.0 + static_cast<double>(n));
      const int shade_idx =
          (max_log > 0) ? static_cast<int>(std::lround(lg / max_log * 9.0)) : 0;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%*s%.2f %c", w - 7, "", lg, kShades[shade_idx]);
      scaled_line += buf;
      std::snprintf(buf, sizeof buf, "%*lld  ", w - 2, n);
      raw_line += buf;
    }
    out << scaled_line << "\n" << raw_line << "\n";
  }
  return out.str();
}

Image render_confusion_heatmap(const ConfusionMatrix& cm, int cell_px) {
  double max_log = 0;
  for (long long v : cm.counts)
    max_log = std::max(max_log, std::log10(1.0 + static_cast<double>(v)));
  const int side = cm.categories * cell_px;
  Image img = Image::Zero(static_cast<Eigen::Index>(side) * side, 3);
  for (int i = 0; i < cm.categories; ++i)
    for (int j = 0; j < cm.categories; ++j) {
      const double lg = std::log10(1.0 + static_cast<double>(cm.at(i, j)));
      const float shade = (max_log > 0) ? static_cast<float>(lg / max_log) : 0.0f;
      for (int y = i * cell_px; y < (i + 1) * cell_px; ++y)
        for (int x = j * cell_px; x < (j + 1) * cell_px; ++x)
          img.row(static_cast<Eigen::Index>(y) * side + x).setConstant(shade);
    }
  return img;
}

EvalResult evaluate_model(ModelParams<float>& params, const ModelConfig& cfg,
                          const DatasetManifest& manifest, WeightScheme scheme) {
  if (manifest.records.empty()) throw EmptyDatasetError("nothing to evaluate");
  const int c = (scheme == WeightScheme::ThreeCat) ? 3 : 4;
  if (cfg.d_pain != c) throw ShapeMismatchError("model d_pain does not match scheme");
  std::vector<int> preds, labels;
  const auto& codes = manifest.modeled_aus.codes();
  std::vector<long long> au_tp(codes.size(), 0), au_fp(codes.size(), 0), au_fn(codes.size(), 0),
      au_tn(codes.size(), 0);

  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < manifest.records.size(); start += kBatch) {
    const std::size_t stop = std::min(start + kBatch, manifest.records.size());
    std::vector<Mat<float>> images;
    images.reserve(stop - start);
    for (std::size_t i = start; i < stop; ++i)
      images.push_back(load_image(manifest.records[i].image_ref));
    BatchCache<float> cache;
    forward_batch(images, params, cfg, RunMode::Eval, cache);
    for (std::size_t i = start; i < stop; ++i) {
      const auto& rec = manifest.records[i];
      const auto& sc = cache.samples[i - start];
      int best = 0;
      for (int k = 1; k < cfg.d_pain; ++k)
        if (sc.logits(k) > sc.logits(best)) best = k;
      preds.push_back(best);
      labels.push_back((scheme == WeightScheme::ThreeCat) ? static_cast<int>(rec.label3)
                                                          : static_cast<int>(rec.label4));
      if (cfg.ablation != AblationMode::BackboneOnly) {
        for (std::size_t a = 0; a < codes.size() && a < static_cast<std::size_t>(cfg.n_au); ++a) {
          const int bit = (sc.p(static_cast<int>(a)) >= float(kOccurrenceThreshold)) ? 1 : 0;
          const int truth = rec.occurrence.at(codes[a]);
          if (bit && truth) ++au_tp[a];
          else if (bit && !truth) ++au_fp[a];
          else if (!bit && truth) ++au_fn[a];
          else ++au_tn[a];
        }
      }
    }
  }

  EvalResult r;
  r.frames = manifest.records.size();
  r.pain = metrics_from_confusion(confusion(preds, labels, c));
  if (cfg.ablation != AblationMode::BackboneOnly) {
    for (std::size_t a = 0; a < codes.size() && a < static_cast<std::size_t>(cfg.n_au); ++a) {
      AUMetrics m;
      m.code = codes[a];
      const double denom = 2.0 * au_tp[a] + au_fp[a] + au_fn[a];
      m.f1 = (denom > 0) ? 100.0 * 2.0 * au_tp[a] / denom : 0.0;
      m.accuracy = 100.0 * static_cast<double>(au_tp[a] + au_tn[a]) /
                   static_cast<double>(r.frames);
      r.per_au.push_back(m);
    }
  }
  return r;
}

std::map<std::string, AUOccurrenceMap> predict_occurrence(ModelParams<float>& params,
                                                          const ModelConfig& cfg,
                                                          const DatasetManifest& manifest) {
  std::map<std::string, AUOccurrenceMap> out;
  const auto& codes = manifest.modeled_aus.codes();
  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < manifest.records.size(); start += kBatch) {
    const std::size_t stop = std::min(start + kBatch, manifest.records.size());
    std::vector<Mat<float>> images;
    for (std::size_t i = start; i < stop; ++i)
      images.push_back(load_image(manifest.records[i].image_ref));
    BatchCache<float> cache;
    forward_batch(images, params, cfg, RunMode::Eval, cache);
    for (std::size_t i = start; i < stop; ++i) {
      AUOccurrenceMap m;
      const auto& sc = cache.samples[i - start];
      for (std::size_t a = 0; a < codes.size() && a < static_cast<std::size_t>(cfg.n_au); ++a)
        m[codes[a]] = (sc.p(static_cast<int>(a)) >= float(kOccurrenceThreshold)) ? 1 : 0;
      out[manifest.records[i].frame_id] = m;
    }
  }
  return out;
}

namespace {
json metrics_report_to_json(const MetricsReport& r) {
  json j;
  j["categories"] = r.cm.categories;
  j["confusion"] = r.cm.counts;
  j["per_class"] = json::array();
  for (const auto& m : r.per_class) {
    json c;
    c["precision"] = m.precision;
    c["recall"] = m.recall;
    c["f1"] = m.f1;
    c["zero_div"] = {m.zero_div_precision, m.zero_div_recall, m.zero_div_f1};
    j["per_class"].push_back(c);
  }
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  return j;
}

MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport r;
  r.cm.categories = j.at("categories").get<int>();
  r.cm.counts = j.at("confusion").get<std::vector<long long>>();
  for (const auto& c : j.at("per_class")) {
    ClassMetrics m;
    m.precision = c.at("precision").get<double>();
    m.recall = c.at("recall").get<double>();
    m.f1 = c.at("f1").get<double>();
    auto z = c.at("zero_div").get<std::vector<bool>>();
    m.zero_div_precision = z[0];
    m.zero_div_recall = z[1];
    m.zero_div_f1 = z[2];
    r.per_class.push_back(m);
  }
  r.macro_precision = j.at("macro_precision").get<double>();
  r.macro_recall = j.at("macro_recall").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  return r;
}
}  // namespace

std::string eval_result_to_json(const EvalResult& r) {
  json j;
  j["pain"] = metrics_report_to_json(r.pain);
  j["frames"] = r.frames;
  j["per_au"] = json::array();
  for (const auto& a : r.per_au)
    j["per_au"].push_back({{"au", a.code}, {"f1", a.f1}, {"accuracy", a.accuracy}});
  return j.dump(2);
}

EvalResult eval_result_from_json(const std::string& text) {
  EvalResult r;
  try {
    json j = json::parse(text);
    r.pain = metrics_report_from_json(j.at("pain"));
    r.frames = j.at("frames").get<std::size_t>();
    for (const auto& a : j.at("per_au")) {
      AUMetrics m;
      m.code = a.at("au").get<int>();
      m.f1 = a.at("f1").get<double>();
      m.accuracy = a.at("accuracy").get<double>();
      r.per_au.push_back(m);
    }
  } catch (const std::exception& e) {
    throw Error("ParseError", std::string("bad metrics json: ") + e.what());
  }
  return r;
}

std::vector<std::string> category_names(WeightScheme scheme) {
  if (scheme == WeightScheme::ThreeCat) return {"NoPain", "Mild", "Obvious"};
  return {"NoPain", "Weak", "Mild", "Strong"};
}

std::string pain_metrics_table(const MetricsReport& r, const std::vector<std::string>& names) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", "category", "F1", "Recall",
                "Precision");
  out << buf;
  for (std::size_t i = 0; i < r.per_class.size(); ++i) {
    const auto& m = r.per_class[i];
    std::snprintf(buf, sizeof buf, "%-10s %10.2f %10.2f %10.2f\n", names[i].c_str(), m.f1,
                  m.recall, m.precision);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-10s %10.2f %10.2f %10.2f\n", "macro", r.macro_f1,
                r.macro_recall, r.macro_precision);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s %10.2f\n", "accuracy", r.accuracy);
  out << buf;
  return out.str();
}

std::string au_metrics_table(const std::vector<AUMetrics>& rows) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %10s %10s\n", "AU", "F1", "Accuracy");
  out << buf;
  double f1_sum = 0, acc_sum = 0;
  for (const auto& a : rows) {
    std::snprintf(buf, sizeof buf, "AU%-4d %10.2f %10.2f\n", a.code, a.f1, a.accuracy);
    out << buf;
    f1_sum += a.f1;
    acc_sum += a.accuracy;
  }
  if (!rows.empty()) {
    std::snprintf(buf, sizeof buf, "%-6s %10.2f %10.2f\n", "mean",
                  f1_sum / static_cast<double>(rows.size()),
                  acc_sum / static_cast<double>(rows.size()));
    out << buf;
  }
  return out.str();
}

std::string ablation_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %10s %10s %10s %10s\n", "variant", "F1", "Recall",
                "Precision", "Accuracy");
  out << buf;
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %10.2f %10.2f %10.2f %10.2f\n", name.c_str(),
                  r.macro_f1, r.macro_recall, r.macro_precision, r.accuracy);
    out << buf;
  }
  return out.str();
}

}  // namespace graphau
