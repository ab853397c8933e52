// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "eegfmri/error.hpp"

namespace eegfmri {

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double eps, double floor) {
  if (!(eps > 0)) fail(ErrorKind::InvalidArgument, "eps must be positive");
  Tensor leaf = x.clone(true);
  backward(f(leaf));
  const Vector analytic = leaf.grad();

  GradCheckResult res;
  Vector probe = x.data();
  for (Eigen::Index i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig - eps;
    const double down = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > res.max_relative_error || i == 0) {
      res.max_relative_error = std::max(res.max_relative_error, err);
      if (err >= res.max_relative_error) {
        res.worst_index = std::size_t(i);
        res.analytic = analytic[i];
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace eegfmri
