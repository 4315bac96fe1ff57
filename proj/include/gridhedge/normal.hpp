#pragma once

namespace gridhedge {

/// Standard normal CDF, computed as erfc(-x/sqrt 2)/2 so the lower tail keeps
/// full relative precision. Absolute error is below 1e-15 on the real line.
double normal_cdf(double x);

double normal_pdf(double x);

/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

namespace testing {

/// Adds `offset` to every normal_cdf result while alive. Used by the
/// validation suite's mutation check; never set outside of it.
class ScopedCdfFault {
 public:
  explicit ScopedCdfFault(double offset);
  ~ScopedCdfFault();
  ScopedCdfFault(const ScopedCdfFault&) = delete;
  ScopedCdfFault& operator=(const ScopedCdfFault&) = delete;

 private:
  double previous_;
};

}  // namespace testing
}  // namespace gridhedge
