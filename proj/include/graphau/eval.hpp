#pragma once

#include <string>
#include <vector>

#include "graphau/manifest.hpp"
#include "graphau/model.hpp"
#include "graphau/pipeline.hpp"
#include "graphau/synth.hpp"

namespace graphau {

// Rows are true categories, columns are predictions.
struct ConfusionMatrix {
  int categories = 0;
  std::vector<long long> counts;  // row-major, categories*categories

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c) : categories(c), counts(static_cast<std::size_t>(c) * c, 0) {}
  long long& at(int truth, int pred) {
    return counts[static_cast<std::size_t>(truth) * categories + pred];
  }
  long long at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * categories + pred];
  }
  long long total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int categories);

// All values in percent. A 0/0 ratio is reported as 0 with its flag set.
struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  bool zero_div_precision = false, zero_div_recall = false, zero_div_f1 = false;
};

struct MetricsReport {
  ConfusionMatrix cm;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double accuracy = 0;
};

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm);

// Text grid: each cell shows log10(1+count) to 2 decimals with the raw
// count beneath, plus a shade character scaled by the log value.
std::string render_confusion_log10(const ConfusionMatrix& cm,
                                   const std::vector<std::string>& category_names);

// Grayscale raster of the same scaling, cell_px pixels per cell.
Image render_confusion_heatmap(const ConfusionMatrix& cm, int cell_px = 32);

struct AUMetrics {
  int code = 0;
  double f1 = 0;        // percent, binary F1 on occurrence
  double accuracy = 0;  // percent
};

struct EvalResult {
  MetricsReport pain;
  std::vector<AUMetrics> per_au;
  std::size_t frames = 0;
};

// Eval-mode forward over every frame of the manifest; pain metrics on the
// chosen scheme plus per-AU occurrence metrics at the 0.5 threshold.
EvalResult evaluate_model(ModelParams<float>& params, const ModelConfig& cfg,
                          const DatasetManifest& manifest, WeightScheme scheme);

// Per-frame AU occurrence predictions, as consumed by the hybrid merge.
std::map<std::string, AUOccurrenceMap> predict_occurrence(ModelParams<float>& params,
                                                          const ModelConfig& cfg,
                                                          const DatasetManifest& manifest);

std::string eval_result_to_json(const EvalResult& r);
EvalResult eval_result_from_json(const std::string& text);

// Aligned-text tables.
std::string pain_metrics_table(const MetricsReport& r, const std::vector<std::string>& names);
std::string au_metrics_table(const std::vector<AUMetrics>& rows);
std::string ablation_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

std::vector<std::string> category_names(WeightScheme scheme);

}  // namespace graphau
