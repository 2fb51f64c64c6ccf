#include "graphau/facs.hpp"

#include <algorithm>

namespace graphau {

bool is_recognized_au(int code) {
  return std::find(kRecognizedAUs.begin(), kRecognizedAUs.end(), code) != kRecognizedAUs.end();
}

void validate_intensity(int code, int value) {
  if (!is_recognized_au(code)) throw InvalidIntensityError(code, value);
  const int hi = (code == 43) ? 1 : 5;
  if (value < 0 || value > hi) throw InvalidIntensityError(code, value);
}

void validate_intensity_map(const AUIntensityMap& aus) {
  for (const auto& [code, value] : aus) validate_intensity(code, value);
}

namespace {
int require_au(const AUIntensityMap& aus, int code) {
  auto it = aus.find(code);
  if (it == aus.end()) throw MissingAUError(code);
  validate_intensity(code, it->second);
  return it->second;
}
}  // namespace

int compute_pspi(const AUIntensityMap& aus) {
  const int au4 = require_au(aus, 4);
  const int au6 = require_au(aus, 6);
  const int au7 = require_au(aus, 7);
  const int au9 = require_au(aus, 9);
  const int au10 = require_au(aus, 10);
  const int au43 = require_au(aus, 43);
  return au4 + std::max(au6, au7) + std::max(au9, au10) + au43;
}

PainCategory3 categorize_pain_3(int pspi) {
  if (pspi < 0 || pspi > 16) throw InvalidPSPIError(pspi);
  if (pspi == 0) return PainCategory3::NoPain;
  if (pspi <= 4) return PainCategory3::Mild;
  return PainCategory3::Obvious;
}

PainCategory4 categorize_pain_4(int pspi) {
  if (pspi < 0 || pspi > 16) throw InvalidPSPIError(pspi);
  switch (pspi) {
    case 0: return PainCategory4::NoPain;
    case 1: return PainCategory4::Weak;
    case 2: return PainCategory4::Mild;
    default: return PainCategory4::Strong;
  }
}

AUOccurrenceMap to_occurrence(const AUIntensityMap& aus) {
  AUOccurrenceMap out;
  for (const auto& [code, value] : aus) {
    validate_intensity(code, value);
    out[code] = std::min(value, 1);
  }
  return out;
}

std::string to_string(PainCategory3 c) {
  switch (c) {
    case PainCategory3::NoPain: return "NoPain";
    case PainCategory3::Mild: return "Mild";
    case PainCategory3::Obvious: return "Obvious";
  }
  return "?";
}

std::string to_string(PainCategory4 c) {
  switch (c) {
    case PainCategory4::NoPain: return "NoPain";
    case PainCategory4::Weak: return "Weak";
    case PainCategory4::Mild: return "Mild";
    case PainCategory4::Strong: return "Strong";
  }
  return "?";
}

PainCategory3 category3_from_string(const std::string& s) {
  if (s == "NoPain") return PainCategory3::NoPain;
  if (s == "Mild") return PainCategory3::Mild;
  if (s == "Obvious") return PainCategory3::Obvious;
  throw Error("ParseError", "unknown 3-level pain category '" + s + "'");
}

PainCategory4 category4_from_string(const std::string& s) {
  if (s == "NoPain") return PainCategory4::NoPain;
  if (s == "Weak") return PainCategory4::Weak;
  if (s == "Mild") return PainCategory4::Mild;
  if (s == "Strong") return PainCategory4::Strong;
  throw Error("ParseError", "unknown 4-level pain category '" + s + "'");
}

}  // namespace graphau
