#ifndef NESTMI_RNG_HPP
#define NESTMI_RNG_HPP

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace nestmi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Seeded random number source. All distribution transforms are implemented
// here (not delegated to std:: distributions) so that a given seed produces
// the same stream on every platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (no cached second value).
    double normal();

    // Gamma(shape, scale=1), Marsaglia-Tsang squeeze. shape > 0.
    double gamma(double shape);

    // Chi-square with df > 0 (df need not be an integer).
    double chisq(double df) { return 2.0 * gamma(0.5 * df); }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

// Draw from N(mean, cov) given the Cholesky factor L of cov (cov = L L').
Vector mvnormal(Rng& rng, const Vector& mean, const Matrix& chol_lower);

// Wishart(df, scale) via the Bartlett decomposition. Requires
// df > dim - 1 and scale symmetric positive definite.
Matrix wishart(Rng& rng, double df, const Matrix& scale);

}  // namespace nestmi

#endif
