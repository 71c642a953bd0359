#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nestmi/chain_store.hpp"

namespace nestmi {

// ===========================================================================
// Convergence assessment for sampler traces
// ===========================================================================

// Single-chain potential scale reduction: the post-burn-in trace is divided
// into n_segments equal contiguous segments of length L (any remainder is
// discarded from the front) and the segments are compared like independent
// chains,
//
//   W    = mean within-segment variance
//   B    = L * variance of the segment means
//   Rhat = sqrt(((L-1)/L) * W + B/L) / sqrt(W)
//
// A zero-variance trace is defined to converge trivially (Rhat = 1); a trace
// that is constant within segments but jumps between them yields +inf.
struct Rhat {
    double value = 1.0;
    int n_segments = 0;
};

// pre: n_segments >= 2 and trace.size() >= 2 * n_segments.
Rhat potential_scale_reduction(const std::vector<double>& trace, int n_segments = 4);

// rho_k = sum_{t <= n-k} (x_t - xbar)(x_{t+k} - xbar) / sum (x_t - xbar)^2
// with the full-trace mean throughout, so rho_0 is exactly 1. Lags must lie
// in [0, n). A zero-variance trace reports every lag as NaN.
std::vector<double> autocorrelation(const std::vector<double>& trace,
                                    const std::vector<long>& lags);

// Quantile by linear interpolation of the order statistics: with the sample
// sorted and h = (n-1)p, the result is x[floor(h)] interpolated toward the
// next order statistic by the fractional part of h.
double interpolated_quantile(std::vector<double> values, double p);

struct PosteriorSummary {
    double mean = 0;
    double sd = 0;  // n-1 denominator; 0 for a single observation
    double q2_5 = 0;
    double median = 0;
    double q97_5 = 0;
    long n = 0;
};

PosteriorSummary posterior_summary(const std::vector<double>& trace);

// Per-parameter Rhat over the post-burn-in traces plus a five-number summary
// of those values. `worst_name` is the argmax, ties broken by lexicographic
// name order; `flagged` lists parameters strictly above the threshold, by
// decreasing Rhat and then name.
struct ConvergenceReport {
    std::vector<std::string> names;  // store order
    std::vector<double> rhat;
    int n_segments = 4;
    double threshold = 1.050;
    double min = 1, q25 = 1, mean = 1, q75 = 1, max = 1;
    std::string worst_name;
    double worst_rhat = 1;
    std::vector<std::string> flagged;
};

ConvergenceReport convergence_report(const ChainStore& store, int n_segments = 4,
                                     double threshold = 1.050);

void write_convergence_report(const ConvergenceReport& r, std::ostream& out);

// Plot-ready tables for one parameter. Trace covers every stored iteration
// with its phase; autocorrelation and the posterior summary use only the
// post-burn-in iterations, with default lags 0 .. min(10 log10(n), n-1).
enum class PlotKind { trace, acf, posterior };

void export_plot_data(const ChainStore& store, const std::string& parameter,
                      PlotKind what, std::ostream& out, char delim = ',');
void export_plot_file(const ChainStore& store, const std::string& parameter,
                      PlotKind what, const std::string& path, char delim = ',');

// Minimal self-contained line chart of the same data: the trace draws one
// polyline vertex per stored iteration, acf one per lag, posterior one per
// histogram bin (Sturges' rule).
std::string plot_svg(const ChainStore& store, const std::string& parameter, PlotKind what);

}  // namespace nestmi
