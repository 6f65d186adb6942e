#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ppgnet/autograd.hpp"

namespace ppgnet::ag {

// Central finite-difference verification of reverse-mode gradients.
// `make_loss` must rebuild the scalar loss from the current values of the
// `wrt` tensors and be deterministic (re-seed any randomness inside it).
struct GradCheckResult {
  bool pass = false;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  std::string worst;  // "tensor <i> [<j>]" of the worst coordinate
  int coords_checked = 0;
};

// Relative error |a - n| / max(|a|, |n|, 1): absolute near zero, relative
// at scale. The default step 1e-6 balances truncation and roundoff at
// 64-bit for losses of order 1..100.
GradCheckResult check_gradients(const std::function<Tensor()>& make_loss,
                                std::vector<Tensor> wrt, double tolerance,
                                double step = 1e-6,
                                int max_coords_per_tensor = -1,
                                std::uint64_t coord_seed = 0x5eed);

// Pushes values within `margin` of zero away from it, in place; used to keep
// sampled inputs off relu/mae kinks before differencing.
void nudge_away_from_zero(std::vector<double>& values, double margin);

// Named result of one suite entry.
struct SuiteEntry {
  std::string name;
  GradCheckResult result;
};

// The full verification suite over every primitive plus composed networks
// (declared here, assembled in gradcheck.cpp and model.cpp helpers).
std::vector<SuiteEntry> run_gradient_suite();

}  // namespace ppgnet::ag
