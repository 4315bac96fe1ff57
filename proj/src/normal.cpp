#include "gridhedge/normal.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "gridhedge/error.hpp"

namespace gridhedge {
namespace {
std::atomic<double> g_cdf_fault{0.0};
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::InvalidHorizon: return "InvalidHorizon";
    case ErrorKind::DegenerateVolatility: return "DegenerateVolatility";
    case ErrorKind::NonPositiveSample: return "NonPositiveSample";
    case ErrorKind::SeriesTooShort: return "SeriesTooShort";
    case ErrorKind::TooFewBins: return "TooFewBins";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::NonPositiveGeneration: return "NonPositiveGeneration";
    case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorKind::InfeasibleCalibration: return "InfeasibleCalibration";
    case ErrorKind::TreeTooLarge: return "TreeTooLarge";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MalformedTree: return "MalformedTree";
    case ErrorKind::InvalidAlpha: return "InvalidAlpha";
    case ErrorKind::InsufficientPaths: return "InsufficientPaths";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MalformedInput: return "MalformedInput";
  }
  return "Unknown";
}

double normal_cdf(double x) {
  const double value = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  const double fault = g_cdf_fault.load(std::memory_order_relaxed);
  return fault == 0.0 ? value : value + fault;
}

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "normal_quantile needs p in (0,1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace testing {
ScopedCdfFault::ScopedCdfFault(double offset) : previous_(g_cdf_fault.exchange(offset)) {}
ScopedCdfFault::~ScopedCdfFault() { g_cdf_fault.store(previous_); }
}  // namespace testing

}  // namespace gridhedge
