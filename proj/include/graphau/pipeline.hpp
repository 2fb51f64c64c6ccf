#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graphau/manifest.hpp"

namespace graphau {

enum class WeightScheme { ThreeCat = 0, FourCat = 1 };

// Inverse-occurrence-rate class weights, normalized to sum to the
// category count.
struct ClassWeights {
  std::vector<double> weights;  // one per category, > 0, sums to C
  std::size_t size() const { return weights.size(); }
};

// Drops every record with no active modeled AU, then keeps each surviving
// PSPI=0 record independently with probability keep_rate. PSPI>0 records
// always survive. Per-record decisions derive from (seed, frame_id).
DatasetManifest undersample(const DatasetManifest& manifest, double keep_rate,
                            std::uint64_t seed);

// Replaces the occurrence bits in fill_set with model predictions while
// keeping the original bits for overlap_set. overlap and fill must
// partition the modeled AU set; predictions must cover every frame.
DatasetManifest merge_hybrid(const DatasetManifest& original,
                             const std::map<std::string, AUOccurrenceMap>& predicted,
                             const std::vector<int>& overlap_set,
                             const std::vector<int>& fill_set);

ClassWeights compute_class_weights(const DatasetManifest& manifest, WeightScheme scheme);

// w_j = C * (1/rate_j) / sum_k (1/rate_k); rates must all be positive.
ClassWeights weights_from_rates(const std::vector<double>& rates);

struct SplitResult {
  DatasetManifest train;
  DatasetManifest test;
};

// Subject-disjoint split: round(test_fraction * n_subjects) subjects go to
// the test side (at least 1, at most n-1), chosen by seeded shuffle.
SplitResult split_subject_disjoint(const DatasetManifest& manifest, double test_fraction,
                                   std::uint64_t seed);

// Frame-wise split (identity leakage possible; off by default in the CLI).
SplitResult split_framewise(const DatasetManifest& manifest, double test_fraction,
                            std::uint64_t seed);

// Per-AU positive weights (1-rate)/rate over the manifest's occurrence
// bits, used by the AU pretraining loss. A rate of 0 or 1 yields weight 1.
std::vector<double> au_positive_weights(const DatasetManifest& manifest);

}  // namespace graphau
