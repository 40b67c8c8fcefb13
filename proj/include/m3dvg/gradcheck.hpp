#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace m3dvg::gradcheck {

using Blocks = std::vector<Eigen::MatrixXd>;

/// A scalar function of named matrix blocks together with its analytic
/// gradient, one matrix per block in the same shape.
struct Problem {
  std::string op;
  std::vector<std::string> names;
  Blocks blocks;
  std::function<double(const Blocks&)> value;
  std::function<Blocks(const Blocks&)> gradient;
};

struct Options {
  double step = 1e-5;
  double floor = 1e-3;  // denominator floor of the relative error
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

struct BlockResult {
  std::string name;
  Eigen::Index entries = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct Report {
  std::string op;
  std::uint64_t seed = 0;
  Options options;
  std::vector<BlockResult> blocks;

  double max_rel_error() const;
};

/// Central differences (f(x + h) - f(x - h)) / 2h on every entry of every
/// block, compared against Problem::gradient.
Report check(const Problem& problem, const Options& options = {});

enum class Reduction {
  sum,       // sum of all outputs
  weighted,  // sum of outputs times fixed random weights
};

/// Names accepted by make_problem.
const std::vector<std::string>& registered_ops();

/// Seeded random instance of a registered op. Inputs are resampled until
/// every ReLU pre-activation and every absolute-value or min/max argument sits
/// at least kKinkMargin away from its kink. Throws Error{InvalidArgument}
/// on an unknown op.
Problem make_problem(std::string_view op, std::uint64_t seed, Reduction reduction = Reduction::sum);

inline constexpr double kKinkMargin = 1e-3;

Report grad_check(std::string_view op, std::uint64_t seed, const Options& options = {},
                  Reduction reduction = Reduction::sum);

std::string report_json(const std::vector<Report>& reports);

}  // namespace m3dvg::gradcheck
