#include "basisfit/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace basisfit {

MetricReport evaluate(const DepthGrid& pred, const DepthGrid& gt, double depth_cap) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");

  double abs_sum = 0.0, sq_sum = 0.0, inv_sq_sum = 0.0;
  long n = 0, d1 = 0, d2 = 0, d3 = 0;
  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (Eigen::Index i = 0; i < gt.pixels(); ++i) {
    const double g = gt.depth(i);
    const double p = pred.depth(i);
    if (!gt.valid(i) || !pred.valid(i) || !(g > 0.0) || g > depth_cap || !(p > 0.0)) continue;
    const double err = p - g;
    abs_sum += std::abs(err);
    sq_sum += err * err;
    const double inv_err = 1000.0 / p - 1000.0 / g;
    inv_sq_sum += inv_err * inv_err;
    const double ratio = std::max(p / g, g / p);
    d1 += ratio < t1;
    d2 += ratio < t2;
    d3 += ratio < t3;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::NoValidPixels, "no pixel passes the evaluation mask");

  const double dn = static_cast<double>(n);
  MetricReport r;
  r.mae = abs_sum / dn;
  r.rmse = std::sqrt(sq_sum / dn);
  r.irmse = std::sqrt(inv_sq_sum / dn);
  r.delta1 = 100.0 * static_cast<double>(d1) / dn;
  r.delta2 = 100.0 * static_cast<double>(d2) / dn;
  r.delta3 = 100.0 * static_cast<double>(d3) / dn;
  r.n_evaluated = n;
  r.depth_cap = depth_cap;
  return r;
}

}  // namespace basisfit
