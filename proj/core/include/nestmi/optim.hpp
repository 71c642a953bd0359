#pragma once

#include <functional>

#include "nestmi/rng.hpp"

namespace nestmi {

struct SimplexOptions {
    double initial_step = 1.0;
    double ftol_rel = 1e-9;   // relative spread of objective values across the simplex
    double xtol_abs = 1e-8;   // max-norm diameter of the simplex
    int max_evals = 10000;
};

struct SimplexResult {
    Vector x;
    double fx = 0.0;
    int n_evals = 0;
    bool converged = false;
};

// Nelder-Mead downhill simplex. Stops when both the objective spread and the
// simplex diameter fall under their tolerances; `converged` is false when the
// evaluation budget runs out first (best vertex still returned).
SimplexResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                          const SimplexOptions& opt = {});

}  // namespace nestmi
