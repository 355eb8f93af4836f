#pragma once

// Literature constants for the four green-infrastructure NBS types and the
// five measures they act on. Values are given parameters, not derived here.

#include <array>
#include <string_view>

namespace nbsopt::catalog {

inline constexpr std::string_view kVersion = "2025.1";

inline constexpr double kDefaultResolution = 10.0;  // meters per cell side
inline constexpr double kDeltaFraction = 0.2;       // delta = 0.2 * max(field)
inline constexpr double kTempMinRatio = 0.7;        // TempMin ~ 70% of TempMax

struct NbsEntry {
  std::string_view id;
  std::string_view name;
  double install_cost;      // EUR / m^2
  double maintenance_cost;  // EUR / m^2 / yr
  double total_cost;        // EUR / m^2 / yr, installation depreciated over 7 years
};

inline constexpr std::array<NbsEntry, 4> kNbs{{
    {"GW", "Green Wall", 470.0, 11.8, 78.9},
    {"GR", "Green Roof", 310.0, 7.8, 52.0},
    {"ST", "Street Tree", 125.0, 3.1, 21.0},
    {"UP", "Urban Park", 225.0, 5.6, 37.8},
}};

struct MeasureEntry {
  std::string_view id;
  std::string_view unit;
};

inline constexpr std::array<MeasureEntry, 4> kMeasures{{
    {"TempMax", "degC"},
    {"TempMin", "degC"},
    {"PM2.5", "ug/m3"},
    {"PM10", "ug/m3"},
}};

inline constexpr std::string_view kFairness = "Fairness";

/// One kernel row of the sizes-and-ranges table: square side and [edge, center].
struct KernelEntry {
  std::string_view measure;  // one of kMeasures ids, or kFairness
  std::string_view nbs;
  int size;
  double edge;
  double center;
};

inline constexpr std::array<KernelEntry, 20> kKernels{{
    {"TempMax", "GW", 5, 0.10, 2.70},
    {"TempMin", "GW", 3, 0.10, 1.90},
    {"PM2.5", "GW", 5, 0.10, 5.03},
    {"PM10", "GW", 5, 0.10, 12.90},
    {"Fairness", "GW", 5, 2.0, 6.0},

    {"TempMax", "GR", 5, 0.10, 2.00},
    {"TempMin", "GR", 3, 0.10, 1.40},
    {"PM2.5", "GR", 5, 0.10, 2.51},
    {"PM10", "GR", 5, 0.10, 6.45},
    {"Fairness", "GR", 1, 0.1, 2.0},  // 1x1: only the center value is used

    {"TempMax", "ST", 5, 0.10, 1.30},
    {"TempMin", "ST", 3, 0.10, 0.70},
    {"PM2.5", "ST", 3, 0.10, 4.02},
    {"PM10", "ST", 3, 0.10, 10.32},
    {"Fairness", "ST", 3, 0.1, 4.0},

    {"TempMax", "UP", 5, 0.10, 3.50},
    {"TempMin", "UP", 3, 0.10, 2.50},
    {"PM2.5", "UP", 7, 0.10, 5.03},
    {"PM10", "UP", 7, 0.10, 12.90},
    {"Fairness", "UP", 11, 4.0, 10.0},
}};

/// Surface temperature reduction per NBS (degC); the TempMax kernel centers.
struct TemperatureImpact {
  std::string_view nbs;
  double reduction;
};
inline constexpr std::array<TemperatureImpact, 4> kSurfaceTemperature{{
    {"GW", 2.7}, {"GR", 2.0}, {"ST", 1.3}, {"UP", 3.5}}};

/// Particulate absorption per NBS: air score, percentages, and ug/m3 values.
struct PmImpact {
  std::string_view nbs;
  double air_score;
  double pm25_percent;
  double pm10_percent;
  double pm25_absorption;
  double pm10_absorption;
};
inline constexpr std::array<PmImpact, 4> kParticulate{{
    {"GW", 1.00, 25.00, 37.00, 5.03, 12.90},
    {"GR", 0.50, 12.50, 18.50, 2.51, 6.45},
    {"ST", 0.80, 20.00, 29.60, 4.02, 10.32},
    {"UP", 1.00, 25.00, 37.00, 5.03, 12.90},
}};

/// Instance size labels and their square grid side.
struct SizeClass {
  std::string_view label;
  int side;
};
inline constexpr std::array<SizeClass, 4> kSizes{{{"xs", 50}, {"s", 100}, {"m", 200}, {"l", 300}}};

}  // namespace nbsopt::catalog
