#include "atrousfov/advisor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace afov {

int legacy_rate(int stride) {
  switch (stride) {
    case 16: return 6;
    case 8: return 12;
    default:
      throw UnsupportedStride("the legacy rate rule covers strides 8 and 16 only, got " +
                              std::to_string(stride));
  }
}

double optimal_rate(double image_size, int stride, double alpha) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (!(image_size > alpha)) {
    throw std::invalid_argument("image size must exceed alpha (" + std::to_string(alpha) + ")");
  }
  return (image_size - alpha) / (6.0 * stride);
}

int round_rate(double r_star) {
  return std::max(1, static_cast<int>(std::floor(r_star + 0.5)));
}

const char* to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::matched: return "matched";
    case Diagnosis::invalid_kernel_region: return "invalid-kernel-region";
    case Diagnosis::under_coverage: return "under-coverage";
  }
  return "?";
}

ConfigCheck validate_config(double image_size, int stride, int rate, double alpha) {
  if (!(image_size > 0.0) || stride < 1 || rate < 1) {
    throw std::invalid_argument("validate_config: size, stride and rate must be positive");
  }
  ConfigCheck c;
  c.image_size = image_size;
  c.fov = 6.0 * rate * stride + alpha;
  if (c.fov > image_size) {
    c.diagnosis = Diagnosis::invalid_kernel_region;
  } else if (c.fov < image_size) {
    c.diagnosis = Diagnosis::under_coverage;
  } else {
    c.diagnosis = Diagnosis::matched;
  }
  return c;
}

std::vector<GuidelineRow> guideline_table(const std::vector<std::pair<int, int>>& rows,
                                          double alpha) {
  std::vector<GuidelineRow> out;
  out.reserve(rows.size());
  for (const auto& [l, s] : rows) {
    const double r = optimal_rate(l, s, alpha);
    out.push_back(GuidelineRow{l, s, r, round_rate(r)});
  }
  return out;
}

const std::vector<std::pair<int, int>>& standard_guideline_rows() {
  static const std::vector<std::pair<int, int>> rows = [] {
    std::vector<std::pair<int, int>> r;
    for (int s : {16, 8}) {
      for (int l : {128, 256, 320, 512, 640, 768, 769, 832, 896, 1024}) r.emplace_back(l, s);
    }
    return r;
  }();
  return rows;
}

std::string format_row(const GuidelineRow& row) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d %d %.2f %d", row.image_size, row.stride, row.r_star,
                row.r_rounded);
  return buf;
}

AdvisorReport advise(int height, int width, int stride, std::optional<int> rate, double alpha) {
  if (height < 1 || width < 1) throw std::invalid_argument("image size must be positive");
  AdvisorReport rep;
  rep.height = height;
  rep.width = width;
  rep.image_size = std::min(height, width);
  rep.non_square = height != width;
  rep.stride = stride;
  rep.alpha = alpha;
  rep.r_star = optimal_rate(rep.image_size, stride, alpha);
  rep.r_rounded = round_rate(rep.r_star);
  const ConfigCheck at_rounded = validate_config(rep.image_size, stride, rep.r_rounded, alpha);
  rep.fov_end_to_end = at_rounded.fov;
  rep.rounded_diagnosis = at_rounded.diagnosis;
  if (stride == 8 || stride == 16) rep.legacy_rate = legacy_rate(stride);
  if (rate) {
    rep.checked_rate = *rate;
    rep.checked = validate_config(rep.image_size, stride, *rate, alpha);
  }
  return rep;
}

}  // namespace afov
