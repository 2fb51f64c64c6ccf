#include "graphau/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "graphau/errors.hpp"

using nlohmann::json;

namespace graphau {

const std::vector<int> ModeledAUSet::kDefaultCodes = {1, 2, 4, 6, 9, 12, 25, 26};

ModeledAUSet::ModeledAUSet(std::vector<int> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw InvalidConfigError("modeled AU set is empty");
  if (!std::is_sorted(codes_.begin(), codes_.end()))
    throw InvalidConfigError("modeled AU codes must be sorted ascending");
  if (std::adjacent_find(codes_.begin(), codes_.end()) != codes_.end())
    throw InvalidConfigError("modeled AU codes must be unique");
  for (int c : codes_)
    if (!is_recognized_au(c))
      throw InvalidConfigError("unrecognized AU code " + std::to_string(c));
}

bool ModeledAUSet::contains(int code) const {
  return std::binary_search(codes_.begin(), codes_.end(), code);
}

int ModeledAUSet::index_of(int code) const {
  auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
  if (it == codes_.end() || *it != code)
    throw InvalidConfigError("AU" + std::to_string(code) + " not in modeled set");
  return static_cast<int>(it - codes_.begin());
}

bool AUFrameRecord::has_active_modeled_au() const {
  for (const auto& [code, bit] : occurrence)
    if (bit != 0) return true;
  return false;
}

void DatasetManifest::normalize() {
  std::sort(records.begin(), records.end(),
            [](const AUFrameRecord& a, const AUFrameRecord& b) { return a.frame_id < b.frame_id; });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].frame_id == records[i - 1].frame_id)
      throw DuplicateFrameIdError(records[i].frame_id);
}

AUFrameRecord make_record(std::string frame_id, std::string subject_id,
                          std::string image_ref, AUIntensityMap intensities,
                          const ModeledAUSet& modeled) {
  AUFrameRecord r;
  r.frame_id = std::move(frame_id);
  r.subject_id = std::move(subject_id);
  r.image_ref = std::move(image_ref);
  r.au_intensities = std::move(intensities);
  validate_intensity_map(r.au_intensities);
  r.pspi = compute_pspi(r.au_intensities);
  r.label3 = categorize_pain_3(r.pspi);
  r.label4 = categorize_pain_4(r.pspi);
  for (int code : modeled.codes()) {
    auto it = r.au_intensities.find(code);
    const int v = (it == r.au_intensities.end()) ? 0 : it->second;
    r.occurrence[code] = std::min(v, 1);
  }
  return r;
}

namespace {

const std::set<std::string> kRecordKeys = {"frame_id", "subject_id", "image_ref", "au",
                                           "pspi",     "label3",     "label4",    "predicted_au",
                                           "occurrence"};

std::map<int, int> au_object_to_map(const json& obj, std::size_t line) {
  if (!obj.is_object()) throw ParseError(line, "AU map must be a JSON object");
  std::map<int, int> out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    int code;
    try {
      code = std::stoi(it.key());
    } catch (const std::exception&) {
      throw ParseError(line, "AU key '" + it.key() + "' is not an integer code");
    }
    if (!it.value().is_number_integer())
      throw ParseError(line, "AU" + it.key() + " value must be an integer");
    out[code] = it.value().get<int>();
  }
  return out;
}

json au_map_to_object(const std::map<int, int>& m) {
  json obj = json::object();
  for (const auto& [code, v] : m) obj[std::to_string(code)] = v;
  return obj;
}

AUFrameRecord parse_record(const json& j, std::size_t line, const ModeledAUSet& modeled,
                           bool hybrid) {
  if (!j.is_object()) throw ParseError(line, "expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kRecordKeys.count(it.key())) throw ParseError(line, "unknown key '" + it.key() + "'");
  for (const char* k : {"frame_id", "subject_id", "image_ref", "au", "pspi", "label3", "label4",
                        "occurrence"})
    if (!j.contains(k)) throw ParseError(line, std::string("missing key '") + k + "'");

  AUFrameRecord r;
  try {
    r.frame_id = j.at("frame_id").get<std::string>();
    r.subject_id = j.at("subject_id").get<std::string>();
    r.image_ref = j.at("image_ref").get<std::string>();
    r.au_intensities = au_object_to_map(j.at("au"), line);
    r.pspi = j.at("pspi").get<int>();
    r.label3 = category3_from_string(j.at("label3").get<std::string>());
    r.label4 = category4_from_string(j.at("label4").get<std::string>());
    if (j.contains("predicted_au")) r.predicted_au = au_object_to_map(j.at("predicted_au"), line);
    r.occurrence = au_object_to_map(j.at("occurrence"), line);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line, e.what());
  }

  validate_intensity_map(r.au_intensities);
  if (r.pspi < 0 || r.pspi > 16) throw ParseError(line, "pspi out of range");
  if (r.label3 != categorize_pain_3(r.pspi) || r.label4 != categorize_pain_4(r.pspi))
    throw ParseError(line, "labels inconsistent with pspi");
  try {
    if (compute_pspi(r.au_intensities) != r.pspi)
      throw ParseError(line, "pspi inconsistent with AU intensities");
  } catch (const MissingAUError&) {
    // constituents incomplete: pspi is taken on faith
  }
  for (const auto& [code, bit] : r.occurrence) {
    if (!modeled.contains(code))
      throw ParseError(line, "occurrence key AU" + std::to_string(code) + " outside modeled set");
    if (bit != 0 && bit != 1) throw ParseError(line, "occurrence bits must be 0/1");
  }
  if (r.occurrence.size() != modeled.size())
    throw ParseError(line, "occurrence must cover the modeled AU set");
  if (!hybrid) {
    for (int code : modeled.codes()) {
      auto it = r.au_intensities.find(code);
      const int expect = (it == r.au_intensities.end()) ? 0 : std::min(it->second, 1);
      if (r.occurrence.at(code) != expect)
        throw ParseError(line, "occurrence inconsistent with intensities for AU" +
                                   std::to_string(code));
    }
  }
  return r;
}

json record_to_json(const AUFrameRecord& r) {
  json j;
  j["frame_id"] = r.frame_id;
  j["subject_id"] = r.subject_id;
  j["image_ref"] = r.image_ref;
  j["au"] = au_map_to_object(r.au_intensities);
  j["pspi"] = r.pspi;
  j["label3"] = to_string(r.label3);
  j["label4"] = to_string(r.label4);
  if (r.predicted_au) j["predicted_au"] = au_map_to_object(*r.predicted_au);
  j["occurrence"] = au_map_to_object(r.occurrence);
  return j;
}

}  // namespace

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::ostringstream out;
  json meta;
  meta["meta"]["modeled_aus"] = manifest.modeled_aus.codes();
  meta["meta"]["provenance"] = manifest.provenance;
  out << meta.dump() << "\n";
  for (const auto& r : manifest.records) out << record_to_json(r).dump() << "\n";
  return out.str();
}

DatasetManifest manifest_from_jsonl(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(lineno, e.what());
    }
    if (!saw_header && lineno == 1 && j.is_object() && j.contains("meta")) {
      saw_header = true;
      const json& meta = j.at("meta");
      if (meta.contains("modeled_aus"))
        m.modeled_aus = ModeledAUSet(meta.at("modeled_aus").get<std::vector<int>>());
      if (meta.contains("provenance"))
        m.provenance = meta.at("provenance").get<std::map<std::string, std::string>>();
      continue;
    }
    m.records.push_back(parse_record(j, lineno, m.modeled_aus, m.is_hybrid()));
  }
  m.normalize();
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return manifest_from_jsonl(buf.str());
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path);
  out << manifest_to_jsonl(manifest);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace graphau
