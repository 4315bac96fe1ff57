#pragma once

#include <vector>

#include "gridhedge/ces_allocator.hpp"
#include "gridhedge/stochastic_process.hpp"

namespace gridhedge {

/// The microgrids supervised by one operator: dynamics, correlation,
/// demands, and the power of one battery unit.
struct GridEnsemble {
  std::vector<MicrogridSpec> microgrids;
  CorrelationMatrix corr = CorrelationMatrix::identity(1);
  double battery_unit_kw = 1.0;

  std::size_t size() const { return microgrids.size(); }
  std::vector<GbmParams> params() const;
  std::vector<double> demands() const;
  /// Throws on inconsistent sizes, bad demands, bad volatilities, or a
  /// non positive definite correlation.
  void validate() const;
};

}  // namespace gridhedge
