#pragma once

#include <array>
#include <map>
#include <string>

#include "graphau/errors.hpp"

namespace graphau {

// AU codes carried by the datasets this project handles. AU43 (eyes closed)
// is binary; all others are FACS intensities 0-5.
inline constexpr std::array<int, 11> kRecognizedAUs = {1, 2, 4, 6, 7, 9, 10, 12, 25, 26, 43};

using AUIntensityMap = std::map<int, int>;
using AUOccurrenceMap = std::map<int, int>;

enum class PainCategory3 { NoPain = 0, Mild = 1, Obvious = 2 };
enum class PainCategory4 { NoPain = 0, Weak = 1, Mild = 2, Strong = 3 };

bool is_recognized_au(int code);

// Throws InvalidIntensityError unless value is a legal intensity for `code`
// (AU43 is {0,1}, everything else [0,5]).
void validate_intensity(int code, int value);
void validate_intensity_map(const AUIntensityMap& aus);

// PSPI = AU4 + max(AU6, AU7) + max(AU9, AU10) + AU43.
// All four constituent slots must be present; absent keys are an error,
// never an implicit zero.
int compute_pspi(const AUIntensityMap& aus);

// NoPain (0), Mild [1,4], Obvious (>=5).
PainCategory3 categorize_pain_3(int pspi);
// NoPain (0), Weak (1), Mild (2), Strong (>=3).
PainCategory4 categorize_pain_4(int pspi);

// Caps every intensity at one; key set preserved.
AUOccurrenceMap to_occurrence(const AUIntensityMap& aus);

std::string to_string(PainCategory3 c);
std::string to_string(PainCategory4 c);
PainCategory3 category3_from_string(const std::string& s);
PainCategory4 category4_from_string(const std::string& s);

}  // namespace graphau
