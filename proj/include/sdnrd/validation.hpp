// Self-checks against independent references: closed-form M/M/1 sojourn
// times for the simulator and central finite differences for the policy
// gradients.

#ifndef SDNRD_VALIDATION_HPP_
#define SDNRD_VALIDATION_HPP_

#include "sdnrd/trainer.hpp"

#include <cstdint>

namespace sdnrd {

struct Mm1Check {
  double utilization = 0.0;
  double service_rate = 0.0;
  double expected = 0.0;   // 1 / (alpha - lambda)
  double simulated = 0.0;  // mean response time over `completions`
  Index completions = 0;
  double relative_error = 0.0;
  bool passed = false;
};

// One switch, one controller, zero propagation delay: the response time is
// the M/M/1 sojourn time.
Mm1Check check_mm1(double utilization, Index min_completions, std::uint64_t seed,
                   double service_rate = 1000.0, double tolerance = 0.03);

struct GradCheckOptions {
  Index instances = 100;
  double step = 1e-5;
  double logpi_tolerance = 1e-4;
  double surrogate_tolerance = 1e-3;
  Index surrogate_batch = 8;
};

struct GradCheckReport {
  Index instances = 0;
  Index redraws = 0;  // draws rejected for sitting too close to a kink
  double max_logpi_error = 0.0;
  double max_mean_error = 0.0;
  double max_surrogate_error = 0.0;
  Index clipped_samples = 0;  // surrogate samples whose gradient was zeroed
  bool passed = false;
};

// Random small instances with M in {1, 2, 3, 5} and two hidden layers of 8.
GradCheckReport check_policy_gradients(const GradCheckOptions& options, std::uint64_t seed);

}  // namespace sdnrd

#endif  // SDNRD_VALIDATION_HPP_
