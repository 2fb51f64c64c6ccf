#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphau/facs.hpp"

namespace graphau {

// Ordered list of the AU codes the model predicts; unique, ascending.
class ModeledAUSet {
public:
  ModeledAUSet() : codes_(kDefaultCodes) {}
  explicit ModeledAUSet(std::vector<int> codes);

  const std::vector<int>& codes() const { return codes_; }
  std::size_t size() const { return codes_.size(); }
  bool contains(int code) const;
  // Position of `code` in the ordered set; throws if absent.
  int index_of(int code) const;

  bool operator==(const ModeledAUSet&) const = default;

  static const std::vector<int> kDefaultCodes;  // {1,2,4,6,9,12,25,26}

private:
  std::vector<int> codes_;
};

struct AUFrameRecord {
  std::string frame_id;
  std::string subject_id;
  std::string image_ref;  // file path or "synthetic:" URI
  AUIntensityMap au_intensities;
  int pspi = 0;
  PainCategory3 label3 = PainCategory3::NoPain;
  PainCategory4 label4 = PainCategory4::NoPain;
  std::optional<AUOccurrenceMap> predicted_au;
  AUOccurrenceMap occurrence;  // over the manifest's modeled AU set

  bool operator==(const AUFrameRecord&) const = default;

  bool has_active_modeled_au() const;
};

struct DatasetManifest {
  std::vector<AUFrameRecord> records;  // sorted by frame_id
  ModeledAUSet modeled_aus;
  std::map<std::string, std::string> provenance;

  bool operator==(const DatasetManifest&) const = default;

  // Sorts by frame_id and checks uniqueness.
  void normalize();
  bool is_hybrid() const { return provenance.count("hybrid") > 0; }
};

// Builds a record from intensities: pspi/labels/occurrence all derived
// through the FACS math. Intensities must cover the PSPI constituents.
AUFrameRecord make_record(std::string frame_id, std::string subject_id,
                          std::string image_ref, AUIntensityMap intensities,
                          const ModeledAUSet& modeled);

// JSON-lines manifest I/O. An optional leading header object (single key
// "meta") carries modeled AU set and provenance; every other line is one
// record object with exactly the documented keys. Unknown keys rejected.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(const std::string& text);

}  // namespace graphau
