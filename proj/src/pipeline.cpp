#include "graphau/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "graphau/errors.hpp"
#include "graphau/rng.hpp"

namespace graphau {

DatasetManifest undersample(const DatasetManifest& manifest, double keep_rate,
                            std::uint64_t seed) {
  if (!(keep_rate > 0.0) || keep_rate > 1.0)
    throw InvalidConfigError("keep_rate must be in (0,1]");
  DatasetManifest out;
  out.modeled_aus = manifest.modeled_aus;
  out.provenance = manifest.provenance;
  out.provenance["undersample_seed"] = std::to_string(seed);
  out.provenance["undersample_keep_rate"] = std::to_string(keep_rate);
  for (const auto& r : manifest.records) {
    if (!r.has_active_modeled_au()) continue;
    if (r.pspi == 0) {
      auto rng = frame_rng(seed, r.frame_id);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) >= keep_rate) continue;
    }
    out.records.push_back(r);
  }
  out.normalize();
  return out;
}

DatasetManifest merge_hybrid(const DatasetManifest& original,
                             const std::map<std::string, AUOccurrenceMap>& predicted,
                             const std::vector<int>& overlap_set,
                             const std::vector<int>& fill_set) {
  std::set<int> overlap(overlap_set.begin(), overlap_set.end());
  std::set<int> fill(fill_set.begin(), fill_set.end());
  for (int c : overlap)
    if (fill.count(c)) throw OverlappingSetsError("AU" + std::to_string(c) + " in both sets");
  std::set<int> unioned = overlap;
  unioned.insert(fill.begin(), fill.end());
  const auto& modeled = original.modeled_aus.codes();
  if (std::set<int>(modeled.begin(), modeled.end()) != unioned)
    throw OverlappingSetsError("overlap + fill must equal the modeled AU set");

  DatasetManifest out;
  out.modeled_aus = original.modeled_aus;
  out.provenance = original.provenance;
  out.provenance["hybrid"] = "1";
  out.records = original.records;
  for (auto& r : out.records) {
    auto it = predicted.find(r.frame_id);
    if (it == predicted.end()) throw MissingPredictionError(r.frame_id);
    r.predicted_au = it->second;
    for (int code : fill) {
      auto p = it->second.find(code);
      if (p == it->second.end()) throw MissingPredictionError(r.frame_id);
      r.occurrence[code] = std::min(p->second, 1);
    }
    // overlap bits stay exactly as in the original
  }
  return out;
}

ClassWeights weights_from_rates(const std::vector<double>& rates) {
  const std::size_t c = rates.size();
  double inv_sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    if (!(rates[j] > 0.0)) throw EmptyCategoryError("index " + std::to_string(j));
    inv_sum += 1.0 / rates[j];
  }
  ClassWeights w;
  w.weights.resize(c);
  for (std::size_t j = 0; j < c; ++j)
    w.weights[j] = static_cast<double>(c) * (1.0 / rates[j]) / inv_sum;
  return w;
}

ClassWeights compute_class_weights(const DatasetManifest& manifest, WeightScheme scheme) {
  const std::size_t c = (scheme == WeightScheme::ThreeCat) ? 3 : 4;
  std::vector<double> counts(c, 0.0);
  for (const auto& r : manifest.records) {
    const int idx = (scheme == WeightScheme::ThreeCat) ? static_cast<int>(r.label3)
                                                       : static_cast<int>(r.label4);
    counts[static_cast<std::size_t>(idx)] += 1.0;
  }
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (total == 0.0) throw EmptyDatasetError("no records to weight");
  std::vector<double> rates(c);
  for (std::size_t j = 0; j < c; ++j) {
    if (counts[j] == 0.0) throw EmptyCategoryError("category " + std::to_string(j));
    rates[j] = counts[j] / total;
  }
  return weights_from_rates(rates);
}

namespace {
SplitResult split_by_subjects(const DatasetManifest& manifest,
                              const std::set<std::string>& test_subjects) {
  SplitResult out;
  out.train.modeled_aus = manifest.modeled_aus;
  out.test.modeled_aus = manifest.modeled_aus;
  out.train.provenance = manifest.provenance;
  out.test.provenance = manifest.provenance;
  out.train.provenance["split"] = "train";
  out.test.provenance["split"] = "test";
  for (const auto& r : manifest.records)
    (test_subjects.count(r.subject_id) ? out.test : out.train).records.push_back(r);
  out.train.normalize();
  out.test.normalize();
  return out;
}
}  // namespace

SplitResult split_subject_disjoint(const DatasetManifest& manifest, double test_fraction,
                                   std::uint64_t seed) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
    throw InvalidConfigError("test_fraction must be in (0,1)");
  std::set<std::string> subject_set;
  for (const auto& r : manifest.records) subject_set.insert(r.subject_id);
  if (subject_set.size() < 2) throw TooFewSubjectsError(subject_set.size());

  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
  std::mt19937_64 rng(fnv1a64("split", seed));
  std::shuffle(subjects.begin(), subjects.end(), rng);
  auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(subjects.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, subjects.size() - 1);
  return split_by_subjects(manifest,
                           std::set<std::string>(subjects.begin(), subjects.begin() + n_test));
}

SplitResult split_framewise(const DatasetManifest& manifest, double test_fraction,
                            std::uint64_t seed) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
    throw InvalidConfigError("test_fraction must be in (0,1)");
  SplitResult out;
  out.train.modeled_aus = manifest.modeled_aus;
  out.test.modeled_aus = manifest.modeled_aus;
  out.train.provenance = manifest.provenance;
  out.test.provenance = manifest.provenance;
  out.train.provenance["split"] = "train-framewise";
  out.test.provenance["split"] = "test-framewise";
  for (const auto& r : manifest.records) {
    auto rng = frame_rng(fnv1a64("framesplit", seed), r.frame_id);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    (u(rng) < test_fraction ? out.test : out.train).records.push_back(r);
  }
  out.train.normalize();
  out.test.normalize();
  return out;
}

std::vector<double> au_positive_weights(const DatasetManifest& manifest) {
  const auto& codes = manifest.modeled_aus.codes();
  std::vector<double> weights(codes.size(), 1.0);
  if (manifest.records.empty()) return weights;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    double pos = 0.0;
    for (const auto& r : manifest.records) pos += r.occurrence.at(codes[i]);
    const double rate = pos / static_cast<double>(manifest.records.size());
    if (rate > 0.0 && rate < 1.0) weights[i] = (1.0 - rate) / rate;
  }
  return weights;
}

}  // namespace graphau
