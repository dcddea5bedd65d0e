#pragma once

// Finite-difference verification of reverse-mode gradients. Always runs in
// 64-bit precision; central differences with per-coordinate step
// h = 1e-5 * max(1, |x|).

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cardiac/tensor.hpp"

namespace cardiac {

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  // (input index, flat coordinate within that input)
  std::array<int, 2> worst_coordinate = {-1, -1};

  bool ok(double tol = 1e-4) const { return max_rel_error <= tol; }
};

using ScalarFn = std::function<Tensor<double>(std::vector<Tensor<double>>&)>;

inline GradCheckReport gradcheck(const std::string& op_name, const ScalarFn& f,
                                 const std::vector<Tensor<double>>& inputs) {
  constexpr double kEps = 1e-8;

  auto eval = [&](const std::vector<Tensor<double>>& pts, bool want_grad,
                  std::vector<Tensor<double>>* leaves_out) {
    std::vector<Tensor<double>> leaves;
    leaves.reserve(pts.size());
    for (const auto& t : pts) leaves.push_back(t.clone_leaf(want_grad));
    Tensor<double> out = f(leaves);
    if (out.size() != 1)
      throw ContractError("gradcheck(" + op_name + "): function output is not scalar");
    if (want_grad) {
      out.backward();
      *leaves_out = leaves;
    }
    return out.item();
  };

  std::vector<Tensor<double>> leaves;
  eval(inputs, true, &leaves);

  GradCheckReport report;
  report.op_name = op_name;
  std::vector<Tensor<double>> work;
  for (const auto& t : inputs) work.push_back(t.clone_leaf(false));

  for (size_t ii = 0; ii < inputs.size(); ++ii) {
    const auto& analytic = leaves[ii].grad();
    for (size_t j = 0; j < work[ii].size(); ++j) {
      const double x = work[ii].data()[j];
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      work[ii].data()[j] = x + h;
      const double fp = eval(work, false, nullptr);
      work[ii].data()[j] = x - h;
      const double fm = eval(work, false, nullptr);
      work[ii].data()[j] = x;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[j];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kEps});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_coordinate = {static_cast<int>(ii), static_cast<int>(j)};
      }
    }
  }
  return report;
}

}  // namespace cardiac
