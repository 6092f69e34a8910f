#pragma once

#include <string>
#include <vector>

namespace caai::metrics {

/// Prediction in [0,1] and strictly binary ground truth of the same size.
struct EvalPair {
  int height = 0;
  int width = 0;
  std::vector<double> pred;
  std::vector<double> gt;

  size_t pixels() const { return pred.size(); }
  void validate() const;
};

inline constexpr int kThresholds = 255;     // t = k/256, k = 1..255
inline constexpr double kFMeasureBeta2 = 0.3;
inline constexpr double kEMeasureEps = 1e-12;
inline constexpr double kSMeasureAlpha = 0.5;

/// Mean absolute error: (1/(H*W)) * sum |S - G|.
double mae(const EvalPair& pair);

/// Max F-measure over the 255-threshold sweep, beta^2 = 0.3. Precision is 0
/// when nothing is predicted positive; F is 0 when its denominator is 0.
/// Requires at least one positive ground-truth pixel.
double f_measure_curve(const EvalPair& pair);

/// Max enhanced-alignment measure over the 255-threshold sweep. Both maps
/// are reduced to bias maps (value minus map mean); the per-pixel alignment
/// 2*phiG*phiB / (phiG^2 + phiB^2 + eps) is squashed through (1+xi)^2/4 and
/// averaged. An all-ones ground truth matched by an all-ones binarization
/// scores exactly 1.
double e_measure_curve(const EvalPair& pair);

/// Structure measure S_alpha = 0.5*S_o + 0.5*S_r, clamped to [0,1].
/// Degenerate conventions: empty gt -> 1 - mean(pred); full gt -> mean(pred).
double s_measure(const EvalPair& pair);

struct ImageMetrics {
  std::string stem;
  double s_measure = 0;
  double mae = 0;
  double max_f = 0;
  double max_e = 0;
  bool skipped_empty_gt = false;
};

struct MetricReport {
  std::vector<ImageMetrics> rows;  // ordered by stem
  double mean_s = 0, mean_mae = 0, mean_f = 0, mean_e = 0;
  int evaluated = 0;
  int skipped = 0;
};

ImageMetrics evaluate_pair(const std::string& stem, const EvalPair& pair);

/// Evaluates matching filename stems from two directories of maps. The stem
/// sets must coincide; predictions are bilinearly resized to the ground-truth
/// size when they disagree (with a warning). Images with empty ground truth
/// are flagged and excluded from the means.
MetricReport evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir);

/// stem,s_measure,mae,max_f,max_e rows plus a final MEAN row. Skipped images
/// are not written.
void write_csv(const MetricReport& report, const std::string& path);

/// Aligned table with the usual column naming.
std::string format_table(const MetricReport& report);

}  // namespace caai::metrics
