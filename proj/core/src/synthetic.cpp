#include "nestmi/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nestmi/error.hpp"
#include "nestmi/rng.hpp"

namespace nestmi {

namespace {

const double kNA = std::numeric_limits<double>::quiet_NaN();

// Factor F with cov = F F' for a symmetric positive semidefinite matrix;
// semidefinite inputs (zero included) are legal, so eigendecompose rather
// than Cholesky and clamp eigenvalue noise at zero.
Matrix psd_factor(const Matrix& cov, const std::string& what) {
    if (cov.rows() != cov.cols()) throw ValidationError(what + " must be square");
    if (cov.rows() == 0) return cov;
    double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw ValidationError(what + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    Vector lambda = es.eigenvalues();
    if (lambda.minCoeff() < -1e-10 * scale)
        throw ValidationError(what + " is not positive semidefinite");
    Vector root = lambda.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

Vector draw(Rng& gen, const Matrix& factor) {
    Vector z(factor.cols());
    for (long i = 0; i < z.size(); ++i) z(i) = gen.normal();
    return factor * z;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Intercept with mean_i logistic(alpha + slope * z_i) == rate, by bisection;
// the mean is continuous and increasing in alpha.
double calibrate_intercept(const Vector& z, double slope, double rate) {
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        double mid = 0.5 * (lo + hi);
        double mean = 0.0;
        for (long i = 0; i < z.size(); ++i) mean += logistic(mid + slope * z(i));
        if (mean / static_cast<double>(z.size()) < rate)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

Dataset generate_two_level(int n_groups, int n_per_group, const Matrix& beta, const Matrix& psi,
                           const Matrix& sigma, std::uint64_t seed) {
    if (n_groups < 1 || n_per_group < 1)
        throw ValidationError("group count and group size must be positive");
    int r = static_cast<int>(sigma.rows());
    int p = static_cast<int>(beta.rows());
    if (r < 1) throw ValidationError("at least one response is required");
    if (beta.cols() != r)
        throw ValidationError("coefficient matrix needs one column per response");
    if (psi.rows() % r != 0)
        throw ValidationError("random-effect covariance order must be a multiple of the response count");
    int q = static_cast<int>(psi.rows()) / r;
    if (q > p) throw ValidationError("more random effects than design columns");

    Matrix chol_psi = psd_factor(psi, "random-effect covariance");
    Matrix chol_sigma = psd_factor(sigma, "residual covariance");

    Rng gen(seed);
    int n = n_groups * n_per_group;
    std::vector<Vector> cols(static_cast<size_t>(r + p - 1), Vector(n));
    std::vector<std::string> labels;
    labels.reserve(static_cast<size_t>(n));

    int row = 0;
    Vector x(p);
    x(0) = 1.0;
    for (int j = 0; j < n_groups; ++j) {
        Vector b = draw(gen, chol_psi);  // column-stacked, q per response
        std::string label = "g" + std::to_string(j + 1);
        for (int i = 0; i < n_per_group; ++i, ++row) {
            for (int v = 1; v < p; ++v) x(v) = gen.normal();
            Vector e = draw(gen, chol_sigma);
            for (int k = 0; k < r; ++k) {
                double y = x.dot(beta.col(k)) + e(k);
                for (int u = 0; u < q; ++u) y += x(u) * b(k * q + u);
                cols[static_cast<size_t>(k)](row) = y;
            }
            for (int v = 1; v < p; ++v) cols[static_cast<size_t>(r + v - 1)](row) = x(v);
            labels.push_back(label);
        }
    }

    std::vector<std::string> names;
    for (int k = 0; k < r; ++k) names.push_back("y" + std::to_string(k + 1));
    for (int v = 1; v < p; ++v) names.push_back("x" + std::to_string(v));
    return Dataset(names, cols, "g", labels, 0);
}

Dataset ampute(const Dataset& d, const AmputeSpec& spec) {
    for (const auto& [var, rate] : spec.rates) {
        d.var_index(var);
        if (!(rate >= 0.0 && rate < 1.0))
            throw ValidationError("missing rate for " + var + " must be in [0, 1)");
    }

    Vector z;
    double slope = spec.mar_slope;
    if (spec.mechanism == Mechanism::MAR) {
        if (spec.mar_driver.empty()) throw ValidationError("MAR amputation needs a driver variable");
        for (const auto& [var, rate] : spec.rates)
            if (var == spec.mar_driver && rate > 0.0)
                throw ValidationError("the MAR driver " + var + " cannot itself be amputed");
        int dv = d.var_index(spec.mar_driver);
        for (int i = 0; i < d.n_rows(); ++i)
            if (d.is_missing(i, dv))
                throw ValidationError("the MAR driver " + spec.mar_driver +
                                      " must be fully observed");
        const Vector& v = d.column(dv);
        double mean = v.mean();
        double sd = std::sqrt((v.array() - mean).square().sum() /
                              static_cast<double>(v.size() - 1));
        if (sd == 0.0)
            throw ValidationError("the MAR driver " + spec.mar_driver + " is constant");
        z = (v.array() - mean) / sd;
    }

    Dataset out = d;
    Rng gen(spec.seed);
    for (const auto& [var, rate] : spec.rates) {
        if (rate == 0.0) continue;
        int vi = out.var_index(var);
        if (spec.mechanism == Mechanism::MCAR) {
            for (int i = 0; i < out.n_rows(); ++i)
                if (gen.uniform() < rate) out.set_value(i, vi, kNA);
        } else {
            double alpha = calibrate_intercept(z, slope, rate);
            for (int i = 0; i < out.n_rows(); ++i)
                if (gen.uniform() < logistic(alpha + slope * z(i))) out.set_value(i, vi, kNA);
        }
    }
    return out;
}

PirlsDesign pirls_design() {
    PirlsDesign des;
    des.variables = {"MA", "RA", "CA", "SES", "DPM", "DPR", "SC"};
    int v = 7;

    Matrix r(v, v);
    // clang-format off
    r << 1.000,  0.528,  0.530,  0.232, -0.234, -0.238, -0.217,
         0.528,  1.000,  0.493,  0.299, -0.291, -0.294, -0.327,
         0.530,  0.493,  1.000,  0.240, -0.265, -0.251, -0.221,
         0.232,  0.299,  0.240,  1.000, -0.154, -0.155, -0.123,
        -0.234, -0.291, -0.265, -0.154,  1.000,  0.782,  0.399,
        -0.238, -0.294, -0.251, -0.155,  0.782,  1.000,  0.419,
        -0.217, -0.327, -0.221, -0.123,  0.399,  0.419,  1.000;
    // clang-format on
    des.correlation = r;

    des.icc = Vector(v);
    des.icc << 0.121, 0.15, 0.15, 0.122, 0.179, 0.15, 0.15;

    des.missing_rates = Vector(v);
    des.missing_rates << 0.194, 0.0, 0.0, 0.35, 0.614, 0.215, 0.217;

    // Split the total correlation into between and within parts that keep the
    // per-variable intraclass correlations: scaling a common matrix by the
    // level loadings makes the two parts sum back to the target exactly.
    Vector sb = des.icc.cwiseSqrt();
    Vector sw = (Vector::Ones(v) - des.icc).cwiseSqrt();
    des.between = Matrix(v, v);
    des.within = Matrix(v, v);
    for (int a = 0; a < v; ++a)
        for (int b = 0; b < v; ++b) {
            double w = sb(a) * sb(b) + sw(a) * sw(b);
            double c = r(a, b) / w;
            des.between(a, b) = sb(a) * sb(b) * c;
            des.within(a, b) = sw(a) * sw(b) * c;
        }
    return des;
}

Dataset pirls_like(std::uint64_t seed) {
    PirlsDesign des = pirls_design();
    int v = static_cast<int>(des.variables.size());

    // 217 classes of 19 students plus 258 of 18: 8,767 students in 475 classes.
    std::vector<int> sizes;
    for (int j = 0; j < 217; ++j) sizes.push_back(19);
    for (int j = 0; j < 258; ++j) sizes.push_back(18);
    int n = 0;
    for (int s : sizes) n += s;

    Matrix fb = psd_factor(des.between, "between-class covariance");
    Matrix fw = psd_factor(des.within, "within-class covariance");

    Rng gen(seed);
    std::vector<Vector> cols(static_cast<size_t>(v), Vector(n));
    std::vector<std::string> labels;
    labels.reserve(static_cast<size_t>(n));
    int row = 0;
    for (size_t j = 0; j < sizes.size(); ++j) {
        Vector u = draw(gen, fb);
        char buf[16];
        std::snprintf(buf, sizeof buf, "c%03u", static_cast<unsigned>(j + 1));
        for (int i = 0; i < sizes[j]; ++i, ++row) {
            Vector y = u + draw(gen, fw);
            for (int k = 0; k < v; ++k) cols[static_cast<size_t>(k)](row) = y(k);
            labels.emplace_back(buf);
        }
    }

    // Missingness: a unit-nonresponse block and SES, both MAR on reading
    // achievement; planned MCAR on DPM; item-level MCAR on DPM/DPR/SC sized
    // so the overall rates land on the design targets.
    const int MA = 0, RA = 1, SES = 3, DPM = 4, DPR = 5, SC = 6;
    Vector ra = cols[RA];
    double mean = ra.mean();
    double sd = std::sqrt((ra.array() - mean).square().sum() / static_cast<double>(n - 1));
    Vector z = (ra.array() - mean) / sd;

    double a_unit = calibrate_intercept(z, des.mar_slope, des.unit_rate);
    double a_ses = calibrate_intercept(z, des.mar_slope, des.ses_rate);
    double item_dpm = 1.0 - (1.0 - des.missing_rates(DPM)) /
                                ((1.0 - des.unit_rate) * (1.0 - des.planned_dpm_rate));
    double item_dpr = 1.0 - (1.0 - des.missing_rates(DPR)) / (1.0 - des.unit_rate);
    double item_sc = 1.0 - (1.0 - des.missing_rates(SC)) / (1.0 - des.unit_rate);

    for (int i = 0; i < n; ++i)
        if (gen.uniform() < logistic(a_unit + des.mar_slope * z(i)))
            for (int k : {MA, DPM, DPR, SC}) cols[static_cast<size_t>(k)](i) = kNA;
    for (int i = 0; i < n; ++i)
        if (gen.uniform() < logistic(a_ses + des.mar_slope * z(i))) cols[SES](i) = kNA;
    for (int i = 0; i < n; ++i)
        if (gen.uniform() < des.planned_dpm_rate) cols[DPM](i) = kNA;
    for (int i = 0; i < n; ++i)
        if (gen.uniform() < item_dpm) cols[DPM](i) = kNA;
    for (int i = 0; i < n; ++i)
        if (gen.uniform() < item_dpr) cols[DPR](i) = kNA;
    for (int i = 0; i < n; ++i)
        if (gen.uniform() < item_sc) cols[SC](i) = kNA;

    return Dataset(des.variables, cols, "class", labels, 0);
}

}  // namespace nestmi
