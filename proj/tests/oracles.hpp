// Independent reference implementations used only by tests. These stay
// deliberately naive (direct summation, per-pixel loops) so they share no
// code path with the library implementations they cross-check.
#pragma once

#include <vector>

#include "caai/metrics.hpp"

namespace oracles {

struct ConvResult {
  std::vector<int> shape;
  std::vector<double> data;
};

/// Direct six-nested-loop cross-correlation with explicit zero padding.
ConvResult conv2d_direct(const std::vector<double>& x, const std::vector<int>& xs,
                         const std::vector<double>& w, const std::vector<int>& ws,
                         const std::vector<double>& bias, int stride, int padding);

/// Direct accumulation of conv gradients from an upstream grad g.
void conv2d_direct_grads(const std::vector<double>& x, const std::vector<int>& xs,
                         const std::vector<double>& w, const std::vector<int>& ws,
                         const std::vector<double>& g, int stride, int padding,
                         std::vector<double>& gx, std::vector<double>& gw,
                         std::vector<double>& gb);

double mae_scalar(const caai::metrics::EvalPair& pair);
double max_f_scalar(const caai::metrics::EvalPair& pair);
double max_e_scalar(const caai::metrics::EvalPair& pair);
double s_measure_scalar(const caai::metrics::EvalPair& pair);

}  // namespace oracles
