#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onh/common.hpp"

namespace onh {

// Class order is fixed: it defines probability-triple slots, the model file
// layout, and prediction tie-breaking.
enum class EyeClass : int {
    Odd = 0,
    Papilledema = 1,
    Healthy = 2,
};

inline constexpr int kNumEyeClasses = 3;
inline constexpr std::array<EyeClass, 3> kEyeClasses = {
    EyeClass::Odd, EyeClass::Papilledema, EyeClass::Healthy};

std::string_view to_string(EyeClass c);
std::optional<EyeClass> eye_class_from_string(std::string_view s);

// Per-eye classification record: the two volumetric scores plus identifiers.
struct EyeFeatures {
    std::string eye_id;
    std::string subject_id;
    double drusen_mm3 = 0.0;
    double swelling_mm3 = 0.0;
    std::optional<EyeClass> true_class;

    std::array<double, 2> feature_vector() const { return {drusen_mm3, swelling_mm3}; }
};

void validate(const EyeFeatures& f);

// scores.csv: header + one row per eye,
//   eye_id,subject_id,true_class,drusen_score_mm3,swelling_score_mm3
// true_class is one of odd|papilledema|healthy or empty.
inline constexpr std::string_view kScoresCsvHeader =
    "eye_id,subject_id,true_class,drusen_score_mm3,swelling_score_mm3";

std::vector<EyeFeatures> read_scores_csv(const std::filesystem::path& path);
void write_scores_csv(const std::filesystem::path& path, std::span<const EyeFeatures> rows);
// Creates the file with a header if absent, then appends one row.
void append_scores_csv(const std::filesystem::path& path, const EyeFeatures& row);

std::string scores_csv_row(const EyeFeatures& f);

} // namespace onh
