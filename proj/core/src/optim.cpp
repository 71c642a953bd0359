#include "nestmi/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nestmi {

SimplexResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                          const SimplexOptions& opt) {
    const int n = static_cast<int>(x0.size());
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

    std::vector<Vector> x(static_cast<size_t>(n) + 1, x0);
    std::vector<double> fx(static_cast<size_t>(n) + 1);
    int evals = 0;
    auto eval = [&](const Vector& v) {
        ++evals;
        const double y = f(v);
        return std::isfinite(y) ? y : 1e300;
    };
    for (int i = 1; i <= n; ++i) x[static_cast<size_t>(i)](i - 1) += opt.initial_step;
    for (int i = 0; i <= n; ++i) fx[static_cast<size_t>(i)] = eval(x[static_cast<size_t>(i)]);

    std::vector<int> ord(static_cast<size_t>(n) + 1);
    while (true) {
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](int a, int b) {
            return fx[static_cast<size_t>(a)] < fx[static_cast<size_t>(b)];
        });
        const int best = ord.front(), worst = ord.back(), second = ord[ord.size() - 2];

        const double spread = fx[static_cast<size_t>(worst)] - fx[static_cast<size_t>(best)];
        double diam = 0.0;
        for (int i = 0; i <= n; ++i) {
            diam = std::max(diam, (x[static_cast<size_t>(i)] - x[static_cast<size_t>(best)])
                                      .cwiseAbs()
                                      .maxCoeff());
        }
        if (spread <= opt.ftol_rel * (std::fabs(fx[static_cast<size_t>(best)]) + opt.ftol_rel) &&
            diam <= opt.xtol_abs) {
            return {x[static_cast<size_t>(best)], fx[static_cast<size_t>(best)], evals, true};
        }
        if (evals >= opt.max_evals) {
            return {x[static_cast<size_t>(best)], fx[static_cast<size_t>(best)], evals, false};
        }

        Vector centroid = Vector::Zero(n);
        for (int i = 0; i <= n; ++i) {
            if (i != worst) centroid += x[static_cast<size_t>(i)];
        }
        centroid /= n;

        const Vector xr = centroid + alpha * (centroid - x[static_cast<size_t>(worst)]);
        const double fr = eval(xr);
        if (fr < fx[static_cast<size_t>(best)]) {
            const Vector xe = centroid + gamma * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                x[static_cast<size_t>(worst)] = xe;
                fx[static_cast<size_t>(worst)] = fe;
            } else {
                x[static_cast<size_t>(worst)] = xr;
                fx[static_cast<size_t>(worst)] = fr;
            }
            continue;
        }
        if (fr < fx[static_cast<size_t>(second)]) {
            x[static_cast<size_t>(worst)] = xr;
            fx[static_cast<size_t>(worst)] = fr;
            continue;
        }
        // Contraction, outside or inside of the worst vertex.
        if (fr < fx[static_cast<size_t>(worst)]) {
            const Vector xc = centroid + rho * (xr - centroid);
            const double fc = eval(xc);
            if (fc <= fr) {
                x[static_cast<size_t>(worst)] = xc;
                fx[static_cast<size_t>(worst)] = fc;
                continue;
            }
        } else {
            const Vector xc = centroid - rho * (centroid - x[static_cast<size_t>(worst)]);
            const double fc = eval(xc);
            if (fc < fx[static_cast<size_t>(worst)]) {
                x[static_cast<size_t>(worst)] = xc;
                fx[static_cast<size_t>(worst)] = fc;
                continue;
            }
        }
        for (int i = 0; i <= n; ++i) {
            if (i == best) continue;
            x[static_cast<size_t>(i)] =
                x[static_cast<size_t>(best)] +
                shrink * (x[static_cast<size_t>(i)] - x[static_cast<size_t>(best)]);
            fx[static_cast<size_t>(i)] = eval(x[static_cast<size_t>(i)]);
        }
    }
}

}  // namespace nestmi
