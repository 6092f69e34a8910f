#include "caai/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "caai/common.hpp"
#include "caai/image_io.hpp"
#include "caai/parallel.hpp"

namespace caai::metrics {

void EvalPair::validate() const {
  CAAI_CHECK(height >= 1 && width >= 1, "metrics: empty map");
  CAAI_CHECK(pred.size() == static_cast<size_t>(height) * width &&
                 gt.size() == pred.size(),
             "metrics: prediction and ground truth must share H x W");
  for (const double v : gt) {
    CAAI_CHECK(v == 0.0 || v == 1.0, "metrics: ground truth must be binary");
  }
}

double mae(const EvalPair& pair) {
  pair.validate();
  double acc = 0.0;
  for (size_t i = 0; i < pair.pred.size(); ++i) acc += std::fabs(pair.pred[i] - pair.gt[i]);
  return acc / static_cast<double>(pair.pixels());
}

namespace {

// Per-threshold positive counts via a 257-bin histogram. bucket(p) =
// floor(p*256) so that "p >= k/256" is exactly "bucket(p) >= k" (k/256 and
// p*256 are both exact in binary floating point).
struct ThresholdCounts {
  std::int64_t tp[kThresholds + 1];  // index k = 1..255
  std::int64_t fp[kThresholds + 1];
  std::int64_t gt_pos = 0;
  std::int64_t total = 0;
};

ThresholdCounts count_thresholds(const EvalPair& pair) {
  std::int64_t hist_pos[258] = {0};
  std::int64_t hist_neg[258] = {0};
  for (size_t i = 0; i < pair.pred.size(); ++i) {
    int b = static_cast<int>(std::floor(pair.pred[i] * 256.0));
    b = std::clamp(b, 0, 257 - 1);
    if (pair.gt[i] == 1.0) {
      ++hist_pos[b];
    } else {
      ++hist_neg[b];
    }
  }
  ThresholdCounts c;
  c.total = static_cast<std::int64_t>(pair.pixels());
  for (int b = 0; b < 258; ++b) c.gt_pos += hist_pos[b];
  std::int64_t suf_pos = 0, suf_neg = 0;
  for (int b = 257; b >= 1; --b) {
    suf_pos += hist_pos[b];
    suf_neg += hist_neg[b];
    if (b <= kThresholds) {
      c.tp[b] = suf_pos;
      c.fp[b] = suf_neg;
    }
  }
  return c;
}

}  // namespace

double f_measure_curve(const EvalPair& pair) {
  pair.validate();
  const auto c = count_thresholds(pair);
  CAAI_CHECK(c.gt_pos > 0, "f-measure needs at least one positive ground-truth pixel");
  double best = 0.0;
  for (int k = 1; k <= kThresholds; ++k) {
    const std::int64_t tp = c.tp[k], fp = c.fp[k];
    const double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = static_cast<double>(tp) / c.gt_pos;
    const double denom = kFMeasureBeta2 * precision + recall;
    const double f =
        denom > 0 ? (1.0 + kFMeasureBeta2) * precision * recall / denom : 0.0;
    best = std::max(best, f);
  }
  return best;
}

double e_measure_curve(const EvalPair& pair) {
  pair.validate();
  const auto c = count_thresholds(pair);
  const double n = static_cast<double>(c.total);
  double best = 0.0;
  for (int k = 1; k <= kThresholds; ++k) {
    const std::int64_t tp = c.tp[k], fp = c.fp[k];
    const std::int64_t bin_pos = tp + fp;
    double e;
    if (c.gt_pos == c.total && bin_pos == c.total) {
      e = 1.0;  // all-ones gt matched by an all-ones binarization
    } else {
      // The binarized map and the gt each take two values, so the enhanced
      // alignment matrix has at most four distinct entries; accumulate them
      // by contingency counts instead of per pixel.
      const double mu_b = bin_pos / n;
      const double mu_g = c.gt_pos / n;
      const double phi_b[2] = {-mu_b, 1.0 - mu_b};  // B = 0, 1
      const double phi_g[2] = {-mu_g, 1.0 - mu_g};
      const std::int64_t counts[2][2] = {
          {c.total - c.gt_pos - fp, fp},  // G=0: TN, FP
          {c.gt_pos - tp, tp},            // G=1: FN, TP
      };
      double acc = 0.0;
      for (int g = 0; g < 2; ++g) {
        for (int b = 0; b < 2; ++b) {
          if (counts[g][b] == 0) continue;
          const double xi = 2.0 * phi_g[g] * phi_b[b] /
                            (phi_g[g] * phi_g[g] + phi_b[b] * phi_b[b] + kEMeasureEps);
          const double enhanced = (1.0 + xi) * (1.0 + xi) / 4.0;
          acc += enhanced * static_cast<double>(counts[g][b]);
        }
      }
      e = acc / n;
    }
    best = std::max(best, e);
  }
  return best;
}

namespace {

struct MaskedStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample std, 0 when fewer than two pixels
  std::int64_t count = 0;
};

// Mean/std of value(i) over pixels selected by pick(i).
template <class Value, class Pick>
MaskedStats masked_stats(size_t n, Value value, Pick pick) {
  MaskedStats s;
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (pick(i)) {
      sum += value(i);
      ++s.count;
    }
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  if (s.count >= 2) {
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (pick(i)) {
        const double d = value(i) - s.mean;
        ss += d * d;
      }
    }
    s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

// Object-aware similarity of a masked region: 2*m / (m^2 + 1 + 2*lambda*sd),
// lambda = 1.
double object_score(const MaskedStats& s) {
  if (s.count == 0) return 0.0;
  return 2.0 * s.mean / (s.mean * s.mean + 1.0 + 2.0 * s.stddev);
}

double s_object(const EvalPair& pair, double mu) {
  const size_t n = pair.pixels();
  const auto fg = masked_stats(
      n, [&](size_t i) { return pair.pred[i]; }, [&](size_t i) { return pair.gt[i] == 1.0; });
  const auto bg = masked_stats(
      n, [&](size_t i) { return 1.0 - pair.pred[i]; },
      [&](size_t i) { return pair.gt[i] == 0.0; });
  return mu * object_score(fg) + (1.0 - mu) * object_score(bg);
}

struct BlockStats {
  double mean_p = 0, mean_g = 0, var_p = 0, var_g = 0, cov = 0;
  std::int64_t count = 0;
};

BlockStats block_stats(const EvalPair& pair, int y0, int y1, int x0, int x1) {
  BlockStats b;
  b.count = static_cast<std::int64_t>(y1 - y0) * (x1 - x0);
  if (b.count <= 0) return b;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const size_t i = static_cast<size_t>(y) * pair.width + x;
      b.mean_p += pair.pred[i];
      b.mean_g += pair.gt[i];
    }
  }
  b.mean_p /= static_cast<double>(b.count);
  b.mean_g /= static_cast<double>(b.count);
  if (b.count >= 2) {
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const size_t i = static_cast<size_t>(y) * pair.width + x;
        const double dp = pair.pred[i] - b.mean_p;
        const double dg = pair.gt[i] - b.mean_g;
        b.var_p += dp * dp;
        b.var_g += dg * dg;
        b.cov += dp * dg;
      }
    }
    const double denom = static_cast<double>(b.count - 1);
    b.var_p /= denom;
    b.var_g /= denom;
    b.cov /= denom;
  }
  return b;
}

// Uniform-window SSIM with the standard constants at L = 1.
double block_ssim(const BlockStats& b) {
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const double num = (2.0 * b.mean_p * b.mean_g + c1) * (2.0 * b.cov + c2);
  const double den =
      (b.mean_p * b.mean_p + b.mean_g * b.mean_g + c1) * (b.var_p + b.var_g + c2);
  return num / den;
}

// 1-based cut index of the gt centroid along one axis: rows/cols [0, cut)
// form the first block.
int centroid_cut(const std::vector<double>& weights, double total) {
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) acc += (static_cast<double>(i) + 1.0) * weights[i];
  const int cut = static_cast<int>(std::lround(acc / total));
  return std::clamp(cut, 1, static_cast<int>(weights.size()));
}

double s_region(const EvalPair& pair) {
  const int h = pair.height, w = pair.width;
  std::vector<double> row_w(h, 0.0), col_w(w, 0.0);
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = pair.gt[static_cast<size_t>(y) * w + x];
      row_w[y] += g;
      col_w[x] += g;
      total += g;
    }
  }
  const int cy = centroid_cut(row_w, total);
  const int cx = centroid_cut(col_w, total);
  const double area = static_cast<double>(h) * w;

  const int ys[3] = {0, cy, h};
  const int xs[3] = {0, cx, w};
  double score = 0.0;
  for (int by = 0; by < 2; ++by) {
    for (int bx = 0; bx < 2; ++bx) {
      const auto b = block_stats(pair, ys[by], ys[by + 1], xs[bx], xs[bx + 1]);
      if (b.count == 0) continue;
      score += (static_cast<double>(b.count) / area) * block_ssim(b);
    }
  }
  return score;
}

}  // namespace

double s_measure(const EvalPair& pair) {
  pair.validate();
  double mu = 0.0;
  for (const double g : pair.gt) mu += g;
  mu /= static_cast<double>(pair.pixels());

  double mean_pred = 0.0;
  for (const double p : pair.pred) mean_pred += p;
  mean_pred /= static_cast<double>(pair.pixels());

  double s;
  if (mu == 0.0) {
    s = 1.0 - mean_pred;  // empty gt: reward empty predictions
  } else if (mu == 1.0) {
    s = mean_pred;
  } else {
    s = kSMeasureAlpha * s_object(pair, mu) + (1.0 - kSMeasureAlpha) * s_region(pair);
  }
  return std::clamp(s, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// dataset evaluation
// ---------------------------------------------------------------------------

ImageMetrics evaluate_pair(const std::string& stem, const EvalPair& pair) {
  ImageMetrics m;
  m.stem = stem;
  double gt_sum = 0.0;
  for (const double g : pair.gt) gt_sum += g;
  if (gt_sum == 0.0) {
    m.skipped_empty_gt = true;
    return m;
  }
  m.s_measure = s_measure(pair);
  m.mae = mae(pair);
  m.max_f = f_measure_curve(pair);
  m.max_e = e_measure_curve(pair);
  return m;
}

namespace {

std::vector<double> load_gray(const std::string& path, int* h, int* w) {
  const Image img = read_image(path);
  std::vector<double> plane(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double v = 0.0;
      for (int c = 0; c < img.channels; ++c) v += img.at(y, x, c);
      plane[static_cast<size_t>(y) * img.width + x] = v / img.channels;
    }
  }
  *h = img.height;
  *w = img.width;
  return plane;
}

}  // namespace

MetricReport evaluate_dataset(const std::string& pred_dir, const std::string& gt_dir) {
  const auto pred_stems = list_image_stems(pred_dir);
  const auto gt_stems = list_image_stems(gt_dir);
  for (const auto& s : gt_stems) {
    if (!std::binary_search(pred_stems.begin(), pred_stems.end(), s)) {
      fail("missing prediction for stem '" + s + "' in " + pred_dir);
    }
  }
  for (const auto& s : pred_stems) {
    if (!std::binary_search(gt_stems.begin(), gt_stems.end(), s)) {
      fail("missing ground truth for stem '" + s + "' in " + gt_dir);
    }
  }

  MetricReport report;
  report.rows.resize(gt_stems.size());
  parallel_for(0, static_cast<std::int64_t>(gt_stems.size()), [&](std::int64_t idx) {
    const std::string& stem = gt_stems[idx];
    EvalPair pair;
    int gh = 0, gw = 0, ph = 0, pw = 0;
    auto gt = load_gray(*find_image_file(gt_dir, stem), &gh, &gw);
    auto pred = load_gray(*find_image_file(pred_dir, stem), &ph, &pw);
    for (double& g : gt) g = g > 0.5 ? 1.0 : 0.0;
    if (ph != gh || pw != gw) {
      std::cerr << "warning: resizing prediction '" << stem << "' from " << pw << "x" << ph
                << " to ground-truth size " << gw << "x" << gh << "\n";
      pred = bilinear_resize_plane(pred, pw, ph, gw, gh);
    }
    pair.height = gh;
    pair.width = gw;
    pair.pred = std::move(pred);
    pair.gt = std::move(gt);
    report.rows[idx] = evaluate_pair(stem, pair);
  });

  for (const auto& row : report.rows) {
    if (row.skipped_empty_gt) {
      ++report.skipped;
      std::cerr << "warning: '" << row.stem << "' has an empty ground truth; skipped\n";
      continue;
    }
    report.mean_s += row.s_measure;
    report.mean_mae += row.mae;
    report.mean_f += row.max_f;
    report.mean_e += row.max_e;
    ++report.evaluated;
  }
  if (report.evaluated > 0) {
    report.mean_s /= report.evaluated;
    report.mean_mae /= report.evaluated;
    report.mean_f /= report.evaluated;
    report.mean_e /= report.evaluated;
  }
  return report;
}

void write_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write CSV '" + path + "'");
  out << "stem,s_measure,mae,max_f,max_e\n";
  char line[256];
  for (const auto& row : report.rows) {
    if (row.skipped_empty_gt) continue;
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f\n", row.stem.c_str(),
                  row.s_measure, row.mae, row.max_f, row.max_e);
    out << line;
  }
  std::snprintf(line, sizeof(line), "MEAN,%.6f,%.6f,%.6f,%.6f\n", report.mean_s,
                report.mean_mae, report.mean_f, report.mean_e);
  out << line;
}

std::string format_table(const MetricReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s %8s\n", "image", "S_α↑", "MAE↓",
                "maxE↑", "maxF↑");
  os << line;
  for (const auto& row : report.rows) {
    if (row.skipped_empty_gt) {
      std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s %8s\n", row.stem.c_str(), "-", "-",
                    "-", "-");
    } else {
      std::snprintf(line, sizeof(line), "%-24s %8.4f %8.4f %8.4f %8.4f\n", row.stem.c_str(),
                    row.s_measure, row.mae, row.max_e, row.max_f);
    }
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-24s %8.4f %8.4f %8.4f %8.4f\n", "MEAN", report.mean_s,
                report.mean_mae, report.mean_e, report.mean_f);
  os << line;
  if (report.skipped > 0) {
    os << "(" << report.skipped << " image(s) with empty ground truth skipped)\n";
  }
  return os.str();
}

}  // namespace caai::metrics
