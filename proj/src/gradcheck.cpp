#include "vlnav/gradcheck.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace vlnav {

namespace {

struct Evaluation {
    double loss;
    std::vector<std::uint8_t> kinks;
};

Evaluation evaluate(const LossFn& loss_fn) {
    Tape tape(false);
    tape.track_kinks(true);
    Var loss = loss_fn(tape);
    const double v = loss.value()(0, 0);
    if (!std::isfinite(v)) {
        throw std::runtime_error("finite_diff_check: non-finite loss");
    }
    return {v, tape.kink_signature()};
}

}  // namespace

GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<const NamedParam> params,
                                  const GradCheckOptions& options) {
    Tape tape(true);
    tape.track_kinks(true);
    Var loss = loss_fn(tape);
    if (!std::isfinite(loss.value()(0, 0))) {
        throw std::runtime_error("finite_diff_check: non-finite loss");
    }
    const double base_loss = loss.value()(0, 0);
    const std::vector<std::uint8_t> base_kinks = tape.kink_signature();
    const Gradients grads = tape.backward(loss);

    GradCheckResult result;
    Rng rng(options.sample_seed);
    for (const auto& np : params) {
        Param& p = *np.param;
        const Matrix analytic = grads.get(p);
        std::vector<std::size_t> coords(p.value.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
            rng.shuffle(coords);
            coords.resize(options.max_coords_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t i : coords) {
            const double original = p.value[i];
            p.value[i] = original + options.eps;
            const Evaluation plus = evaluate(loss_fn);
            p.value[i] = original - options.eps;
            const Evaluation minus = evaluate(loss_fn);
            p.value[i] = original;
            if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
                ++result.skipped;
                continue;
            }
            const double numeric = (plus.loss - minus.loss) / (2.0 * options.eps);
            const double ga = analytic[i];
            const double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
            ++result.checked;
            const double noise = options.noise_ulps * DBL_EPSILON *
                                 std::max({std::abs(base_loss), std::abs(plus.loss), std::abs(minus.loss)}) /
                                 (2.0 * options.eps);
            if (std::abs(ga) + std::abs(numeric) < noise / options.tolerance) {
                ++result.unresolved;
                result.max_unresolved_gap = std::max(result.max_unresolved_gap, std::abs(ga - numeric) / noise);
            } else {
                result.max_resolved_relative_error = std::max(result.max_resolved_relative_error, rel);
            }
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst = np.name + "[" + std::to_string(i) + "]";
                result.worst_analytic = ga;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace vlnav
