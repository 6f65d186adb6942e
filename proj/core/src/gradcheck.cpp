#include "ppgnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ppgnet::ag {

void nudge_away_from_zero(std::vector<double>& values, double margin) {
  for (double& v : values)
    if (std::abs(v) < margin) v = v < 0.0 ? -margin : margin;
}

GradCheckResult check_gradients(const std::function<Tensor()>& make_loss,
                                std::vector<Tensor> wrt, double tolerance,
                                double step, int max_coords_per_tensor,
                                std::uint64_t coord_seed) {
  GradCheckResult r;
  r.tolerance = tolerance;

  for (auto& t : wrt) t.zero_grad();
  Tensor loss = make_loss();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (auto& t : wrt) analytic.push_back(t.grad());

  Rng pick(coord_seed);
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& vals = wrt[ti].values();
    std::vector<std::size_t> coords(vals.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_tensor > 0 &&
        coords.size() > static_cast<std::size_t>(max_coords_per_tensor)) {
      pick.shuffle(coords);
      coords.resize(static_cast<std::size_t>(max_coords_per_tensor));
    }
    for (std::size_t ci : coords) {
      const double saved = vals[ci];
      vals[ci] = saved + step;
      const double f_plus = make_loss().item();
      vals[ci] = saved - step;
      const double f_minus = make_loss().item();
      vals[ci] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[ti][ci];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1.0});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst = "tensor " + std::to_string(ti) + " [" + std::to_string(ci) + "]";
      }
      ++r.coords_checked;
    }
  }
  r.pass = r.max_rel_err < tolerance;
  return r;
}

}  // namespace ppgnet::ag
