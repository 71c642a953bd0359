#include "nestmi/prob.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "nestmi/error.hpp"

namespace nestmi {

double normal_cdf(double z) {
    static const boost::math::normal_distribution<double> n01;
    return boost::math::cdf(n01, z);
}

double t_pvalue_two_sided(double t, double df) {
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (!(df > 0.0)) throw ValidationError("t distribution requires df > 0");
    const double a = std::fabs(t);
    if (std::isinf(df)) {
        return 2.0 * normal_cdf(-a);
    }
    boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(dist, -a);
}

double f_pvalue(double f, double df1, double df2) {
    if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
    if (!(df1 > 0.0) || !(df2 > 0.0)) {
        throw ValidationError("F distribution requires positive df");
    }
    if (f <= 0.0) return 1.0;
    if (std::isinf(df2)) {
        // k * F -> chi-square with df1 degrees of freedom.
        return chisq_pvalue(df1 * f, df1);
    }
    boost::math::fisher_f_distribution<double> dist(df1, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

double chisq_pvalue(double x, double df) {
    if (!(df > 0.0)) throw ValidationError("chi-square requires df > 0");
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
}

}  // namespace nestmi
