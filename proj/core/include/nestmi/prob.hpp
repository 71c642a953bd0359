#ifndef NESTMI_PROB_HPP
#define NESTMI_PROB_HPP

namespace nestmi {

// Tail probabilities for the reference distributions used in pooled
// inference. Backed by the regularized incomplete beta / gamma functions;
// absolute accuracy well below the 1e-12 target. Infinite degrees of
// freedom select the corresponding normal / chi-square limit.

double normal_cdf(double z);

// Two-sided P(|T| >= |t|) for Student's t with df > 0; df may be +inf.
double t_pvalue_two_sided(double t, double df);

// Upper tail P(F >= f) for the F distribution; df2 may be +inf.
double f_pvalue(double f, double df1, double df2);

// Upper tail P(X >= x) for chi-square.
double chisq_pvalue(double x, double df);

}  // namespace nestmi

#endif
