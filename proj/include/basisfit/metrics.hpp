#pragma once

#include <string>

#include "basisfit/grid.hpp"

namespace basisfit {

struct MetricReport {
  double mae = 0.0;     // [m]
  double rmse = 0.0;    // [m]
  double delta1 = 0.0;  // [%] max(pred/gt, gt/pred) < 1.25
  double delta2 = 0.0;  // [%] ... < 1.25^2
  double delta3 = 0.0;  // [%] ... < 1.25^3
  double irmse = 0.0;   // [1/km]
  long n_evaluated = 0;
  double depth_cap = 0.0;
};

/// Errors over pixels with 0 < gt <= depth_cap, pred > 0 and both valid.
/// Throws NoValidPixels when nothing qualifies.
MetricReport evaluate(const DepthGrid& pred, const DepthGrid& gt, double depth_cap);

}  // namespace basisfit
