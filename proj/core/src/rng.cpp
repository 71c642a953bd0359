#include "nestmi/rng.hpp"

#include <cmath>

#include "nestmi/error.hpp"

namespace nestmi {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double Rng::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) {
        throw NumericalError("gamma draw requires shape > 0");
    }
    if (shape < 1.0) {
        // Boost to shape+1 and scale back: G(a) = G(a+1) * U^(1/a).
        const double u = 1.0 - uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = 1.0 - uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

Vector mvnormal(Rng& rng, const Vector& mean, const Matrix& chol_lower) {
    Vector z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean + chol_lower * z;
}

Matrix wishart(Rng& rng, double df, const Matrix& scale) {
    const Eigen::Index d = scale.rows();
    if (df <= static_cast<double>(d) - 1.0) {
        throw NumericalError("Wishart draw requires df > dim - 1");
    }
    Eigen::LLT<Matrix> llt(scale);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("Wishart scale matrix is not positive definite");
    }

    // Bartlett factor: lower triangular, chi draws on the diagonal,
    // standard normals below, filled row by row.
    Matrix a = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
        a(i, i) = std::sqrt(rng.chisq(df - static_cast<double>(i)));
    }

    Matrix la = llt.matrixL() * a;
    Matrix w = la * la.transpose();
    // Exact symmetry for downstream factorizations.
    return 0.5 * (w + w.transpose());
}

}  // namespace nestmi
