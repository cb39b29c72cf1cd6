#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace wc {

struct Axis {
  double lo = 0, hi = 1;
  int count = 2;
};

struct GridSpec {
  std::vector<Axis> axes;
  int depth = 0;
  int factor = 2;

  static GridSpec line(double lo, double hi, int count, int depth = 0, int factor = 2);
  void validate() const;
};

struct PositivityCertificate {
  std::string quantity_id;
  GridSpec grid;
  double threshold = 1e-6;
  double min_margin = 0;
  std::vector<double> argmin;
  std::vector<std::pair<int, double>> refinement_trace;
  bool passed = false;
  long evaluations = 0;
};

using MarginFn = std::function<double(std::span<const double>)>;

namespace verify {
void set_threads(int n);
int threads();
// Applies to every grid_min call with depth below the override; -1 disables.
void set_depth_override(int depth);
int depth_override();
}  // namespace verify

PositivityCertificate grid_min(const MarginFn& f, const GridSpec& grid, double threshold = 1e-6,
                               std::string quantity_id = "margin");

// Returns the passing end of the bracket once its width is below tol.
double bisect_param(const std::function<bool(double)>& pred, double lo, double hi, double tol);

nlohmann::json to_json(const GridSpec& g);
nlohmann::json to_json(const PositivityCertificate& c);

// Writes JSON with every float in %.17g form.
std::string dump_json(const nlohmann::json& j, int indent = 2);

}  // namespace wc
