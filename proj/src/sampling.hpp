#ifndef QFE_SRC_SAMPLING_HPP
#define QFE_SRC_SAMPLING_HPP

// Internal: draws from the exact distribution of an estimator applied to
// Y = theta + noise without materializing the observation vector. Zero-mean
// coordinates of the quadratic part aggregate to one chi-square draw; tail
// blocks sample only their threshold exceedances (geometric position
// skipping + inverse-CDF truncated normals). Deterministic given the stream.

#include <cmath>
#include <cstdint>
#include <vector>

#include "qfe/analytics.hpp"
#include "qfe/estimators.hpp"
#include "qfe/model.hpp"
#include "qfe/rng.hpp"

namespace qfe::sampling {

using estimators::EstimatorSpec;
using estimators::Tail;
using estimators::ThresholdSchedule;
using model::CoefficientVector;
using model::NoiseLevel;

struct BlockPlan {
    double tau;             // threshold tau_j = 2j
    double zero_count;      // block size minus support slots in the block
    double exceed_prob;     // P(z^2 > tau)
    std::vector<std::pair<std::uint64_t, double>> support;  // (index, theta_i)
};

/// Everything that does not change between replicates.
struct Plan {
    enum class Kind { quad, thresh, diag } kind;
    double n = 1.0;
    double sigma = 1.0;

    // quad / thresh
    std::uint64_t m = 0;
    double quad_zero_dof = 0.0;
    std::vector<std::pair<std::uint64_t, double>> quad_support;
    double quad_center = 0.0;  // m / n

    // thresh tail
    Tail tail = Tail::none;
    std::vector<BlockPlan> blocks;
    double centering_total = 0.0;  // sum over covered tail indices of mu_{n,i}

    // diag
    std::vector<double> diag_a;
    double diag_c = 0.0;
    std::vector<double> diag_theta;  // theta over the a support

    // Expected per-replicate draw count; callers use it as a feasibility guard.
    double expected_draws = 0.0;
};

/// Build the replicate-independent plan. The simulation horizon for infinite
/// schedules extends until both the exceedance mass and the centering mass of
/// further blocks are negligible, which reproduces the infinite sum exactly
/// to double precision.
Plan make_plan(const EstimatorSpec& spec, const CoefficientVector& theta, NoiseLevel n);

/// One draw of the estimator under the plan.
double sample_qhat(const Plan& plan, rng::Stream& stream);

}  // namespace qfe::sampling

#endif
