#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "vlnav/autograd.hpp"

namespace vlnav {

struct NamedParam {
    std::string name;
    Param* param;
};

struct GradCheckResult {
    /// |g_a - g_n| / max(1e-8, |g_a| + |g_n|) over every checked coordinate.
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates whose perturbation crossed a ReLU kink.
    std::size_t skipped = 0;
    std::string worst;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    // Central differences carry rounding of about noise_ulps * DBL_EPSILON *
    // |loss| / (2 eps). Where |g_a| + |g_n| is below that noise over the
    // tolerance, the relative error measures rounding, not the gradient.
    /// Coordinates below the resolution floor.
    std::size_t unresolved = 0;
    /// Relative error over the resolved coordinates only.
    double max_resolved_relative_error = 0.0;
    /// max |g_a - g_n| / noise over the unresolved coordinates; <= 1 agrees.
    double max_unresolved_gap = 0.0;
};

struct GradCheckOptions {
    double eps = 1e-5;
    /// 0 checks every coordinate; otherwise a seeded sample per parameter.
    std::size_t max_coords_per_param = 0;
    std::uint64_t sample_seed = 0;
    /// Tolerance used to split resolved from unresolved coordinates.
    double tolerance = 1e-4;
    /// Rounding noise of the loss, in units of DBL_EPSILON * |loss|.
    double noise_ulps = 4.0;
};

using LossFn = std::function<Var(Tape&)>;

/// Central differences against tape gradients. Relative error per coordinate
/// is |g_a - g_n| / max(1e-8, |g_a| + |g_n|). Throws std::runtime_error on a
/// non-finite loss.
GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<const NamedParam> params,
                                  const GradCheckOptions& options = {});

}  // namespace vlnav
