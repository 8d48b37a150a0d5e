#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "atrousfov/geometry.hpp"

namespace afov {

class UnsupportedStride : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The conventional DeepLab choice: 6 at stride 16, 12 at stride 8.
/// Other strides throw UnsupportedStride.
int legacy_rate(int stride);

/// Base rate whose end-to-end star span 6*r*s + alpha equals the crop size:
/// (l - alpha) / (6 s). Throws std::invalid_argument when l <= alpha or s < 1.
double optimal_rate(double image_size, int stride, double alpha = kDefaultAlpha);

/// Nearest integer, halves rounding up, never below 1.
int round_rate(double r_star);

enum class Diagnosis { matched, invalid_kernel_region, under_coverage };

const char* to_string(Diagnosis d);

struct ConfigCheck {
  double fov = 0.0;
  double image_size = 0.0;
  Diagnosis diagnosis = Diagnosis::matched;
};

/// FOV = 6 r s + alpha compared with the crop size.
ConfigCheck validate_config(double image_size, int stride, int rate, double alpha = kDefaultAlpha);

struct GuidelineRow {
  int image_size = 0;
  int stride = 0;
  double r_star = 0.0;
  int r_rounded = 0;
};

std::vector<GuidelineRow> guideline_table(const std::vector<std::pair<int, int>>& rows,
                                          double alpha = kDefaultAlpha);

/// (l, s) pairs covering crop sizes 128..1024 at strides 16 and 8.
const std::vector<std::pair<int, int>>& standard_guideline_rows();

/// "<l> <s> <r*> <rounded>" with r* printed to two decimals.
std::string format_row(const GuidelineRow& row);

struct AdvisorReport {
  int height = 0;
  int width = 0;
  double image_size = 0.0;  // min(height, width)
  bool non_square = false;
  int stride = 0;
  double alpha = kDefaultAlpha;
  double r_star = 0.0;
  int r_rounded = 0;
  double fov_end_to_end = 0.0;  // at r_rounded
  std::optional<int> legacy_rate;
  Diagnosis rounded_diagnosis = Diagnosis::matched;
  // Present when a rate was supplied for checking.
  std::optional<int> checked_rate;
  std::optional<ConfigCheck> checked;
};

/// Non-square crops are judged by their shorter side.
AdvisorReport advise(int height, int width, int stride, std::optional<int> rate = std::nullopt,
                     double alpha = kDefaultAlpha);

}  // namespace afov
