#include "nestmi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "nestmi/error.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

namespace {

double mean_of(const double* x, size_t n) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) s += x[i];
    return s / static_cast<double>(n);
}

// n-1 denominator; 0 for n < 2.
double var_of(const double* x, size_t n) {
    if (n < 2) return 0;
    double m = mean_of(x, n), ss = 0;
    for (size_t i = 0; i < n; ++i) ss += (x[i] - m) * (x[i] - m);
    return ss / static_cast<double>(n - 1);
}

}  // namespace

Rhat potential_scale_reduction(const std::vector<double>& trace, int n_segments) {
    if (n_segments < 2) throw ValidationError("potential scale reduction needs at least two segments");
    size_t s = static_cast<size_t>(n_segments);
    if (trace.size() < 2 * s)
        throw ValidationError("trace too short: need at least " + std::to_string(2 * s) +
                              " values for " + std::to_string(n_segments) + " segments");

    Rhat r;
    r.n_segments = n_segments;
    if (var_of(trace.data(), trace.size()) == 0) return r;  // constant chain

    size_t L = trace.size() / s;
    const double* start = trace.data() + (trace.size() - L * s);  // drop remainder up front
    std::vector<double> seg_means(s);
    double w = 0;
    for (size_t k = 0; k < s; ++k) {
        const double* seg = start + k * L;
        seg_means[k] = mean_of(seg, L);
        w += var_of(seg, L);
    }
    w /= static_cast<double>(s);
    double b = static_cast<double>(L) * var_of(seg_means.data(), s);
    if (w == 0) {
        r.value = std::numeric_limits<double>::infinity();
        return r;
    }
    double ld = static_cast<double>(L);
    r.value = std::sqrt(((ld - 1) / ld) * w + b / ld) / std::sqrt(w);
    return r;
}

std::vector<double> autocorrelation(const std::vector<double>& trace,
                                    const std::vector<long>& lags) {
    long n = static_cast<long>(trace.size());
    for (long k : lags)
        if (k < 0 || k >= n)
            throw ValidationError("autocorrelation lag " + std::to_string(k) +
                                  " out of range for a trace of length " + std::to_string(n));

    double m = mean_of(trace.data(), trace.size());
    double denom = 0;
    for (double x : trace) denom += (x - m) * (x - m);

    std::vector<double> rho(lags.size());
    if (denom == 0) {
        std::fill(rho.begin(), rho.end(), std::numeric_limits<double>::quiet_NaN());
        return rho;
    }
    for (size_t i = 0; i < lags.size(); ++i) {
        long k = lags[i];
        if (k == 0) {
            rho[i] = 1.0;
            continue;
        }
        double num = 0;
        for (long t = 0; t + k < n; ++t)
            num += (trace[static_cast<size_t>(t)] - m) * (trace[static_cast<size_t>(t + k)] - m);
        rho[i] = num / denom;
    }
    return rho;
}

double interpolated_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    if (!(p >= 0 && p <= 1)) throw ValidationError("quantile probability must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    double h = static_cast<double>(values.size() - 1) * p;
    size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

PosteriorSummary posterior_summary(const std::vector<double>& trace) {
    if (trace.empty()) throw ValidationError("posterior summary of an empty trace");
    PosteriorSummary s;
    s.n = static_cast<long>(trace.size());
    s.mean = mean_of(trace.data(), trace.size());
    s.sd = std::sqrt(var_of(trace.data(), trace.size()));
    s.q2_5 = interpolated_quantile(trace, 0.025);
    s.median = interpolated_quantile(trace, 0.5);
    s.q97_5 = interpolated_quantile(trace, 0.975);
    return s;
}

ConvergenceReport convergence_report(const ChainStore& store, int n_segments,
                                     double threshold) {
    ConvergenceReport rep;
    rep.n_segments = n_segments;
    rep.threshold = threshold;
    rep.names = store.names;
    if (store.names.empty()) throw ValidationError("chain store has no parameters");

    for (const std::string& name : store.names) {
        std::vector<double> tr = store.imputation_trace(name);
        if (tr.empty()) throw ValidationError("chain store has no post-burn-in iterations");
        rep.rhat.push_back(potential_scale_reduction(tr, n_segments).value);
    }

    rep.min = *std::min_element(rep.rhat.begin(), rep.rhat.end());
    rep.max = *std::max_element(rep.rhat.begin(), rep.rhat.end());
    rep.mean = mean_of(rep.rhat.data(), rep.rhat.size());
    rep.q25 = interpolated_quantile(rep.rhat, 0.25);
    rep.q75 = interpolated_quantile(rep.rhat, 0.75);

    rep.worst_rhat = rep.max;
    for (size_t k = 0; k < rep.names.size(); ++k)
        if (rep.rhat[k] == rep.worst_rhat &&
            (rep.worst_name.empty() || rep.names[k] < rep.worst_name))
            rep.worst_name = rep.names[k];

    std::vector<size_t> above;
    for (size_t k = 0; k < rep.names.size(); ++k)
        if (rep.rhat[k] > threshold) above.push_back(k);
    std::sort(above.begin(), above.end(), [&](size_t a, size_t b) {
        if (rep.rhat[a] != rep.rhat[b]) return rep.rhat[a] > rep.rhat[b];
        return rep.names[a] < rep.names[b];
    });
    for (size_t k : above) rep.flagged.push_back(rep.names[k]);
    return rep;
}

void write_convergence_report(const ConvergenceReport& r, std::ostream& out) {
    auto cell = [](double v) {
        std::string s = format_fixed(v, 3);
        return std::string(8 - std::min<size_t>(8, s.size()), ' ') + s;
    };
    out << "Potential scale reduction (Rhat, " << r.n_segments << " segments):\n\n";
    out << "     Min     25%    Mean     75%     Max\n";
    out << cell(r.min) << cell(r.q25) << cell(r.mean) << cell(r.q75) << cell(r.max) << "\n\n";
    out << "Largest Rhat: " << r.worst_name << " (" << format_fixed(r.worst_rhat, 3) << ")\n";
    if (r.flagged.empty()) {
        out << "All parameters are at or below the " << format_fixed(r.threshold, 3)
            << " threshold.\n";
    } else {
        out << "Parameters above the " << format_fixed(r.threshold, 3) << " threshold:\n";
        for (const std::string& name : r.flagged) {
            size_t k = 0;
            while (r.names[k] != name) ++k;
            out << "  " << name << "  " << format_fixed(r.rhat[k], 3) << "\n";
        }
    }
}

namespace {

std::vector<long> default_lags(size_t n) {
    long cap = static_cast<long>(n) - 1;
    long want = static_cast<long>(10.0 * std::log10(static_cast<double>(n)));
    long maxlag = std::min(cap, std::max<long>(want, 1));
    std::vector<long> lags(static_cast<size_t>(maxlag) + 1);
    std::iota(lags.begin(), lags.end(), 0);
    return lags;
}

std::vector<double> post_trace(const ChainStore& store, const std::string& parameter) {
    std::vector<double> tr = store.imputation_trace(parameter);
    if (tr.empty()) throw ValidationError("chain store has no post-burn-in iterations");
    return tr;
}

struct Series {
    std::vector<double> x, y;
};

Series series_for(const ChainStore& store, const std::string& parameter, PlotKind what) {
    Series s;
    switch (what) {
        case PlotKind::trace: {
            const std::vector<double>& tr = store.trace(parameter);
            for (long row = 0; row < store.n_stored(); ++row) {
                s.x.push_back(static_cast<double>(store.iterations[static_cast<size_t>(row)]));
                s.y.push_back(tr[static_cast<size_t>(row)]);
            }
            break;
        }
        case PlotKind::acf: {
            std::vector<double> tr = post_trace(store, parameter);
            std::vector<long> lags = default_lags(tr.size());
            std::vector<double> rho = autocorrelation(tr, lags);
            for (size_t i = 0; i < lags.size(); ++i) {
                s.x.push_back(static_cast<double>(lags[i]));
                s.y.push_back(rho[i]);
            }
            break;
        }
        case PlotKind::posterior: {
            std::vector<double> tr = post_trace(store, parameter);
            double lo = *std::min_element(tr.begin(), tr.end());
            double hi = *std::max_element(tr.begin(), tr.end());
            int bins = static_cast<int>(std::ceil(std::log2(static_cast<double>(tr.size())))) + 1;
            if (bins < 1) bins = 1;
            if (hi == lo) {  // degenerate: single spike
                s.x.push_back(lo);
                s.y.push_back(static_cast<double>(tr.size()));
                break;
            }
            std::vector<double> counts(static_cast<size_t>(bins), 0);
            for (double v : tr) {
                int b = static_cast<int>((v - lo) / (hi - lo) * bins);
                if (b == bins) b = bins - 1;
                counts[static_cast<size_t>(b)] += 1;
            }
            double width = (hi - lo) / bins;
            for (int b = 0; b < bins; ++b) {
                s.x.push_back(lo + (b + 0.5) * width);
                s.y.push_back(counts[static_cast<size_t>(b)]);
            }
            break;
        }
    }
    return s;
}

}  // namespace

void export_plot_data(const ChainStore& store, const std::string& parameter,
                      PlotKind what, std::ostream& out, char delim) {
    switch (what) {
        case PlotKind::trace: {
            const std::vector<double>& tr = store.trace(parameter);
            out << "iteration" << delim << "phase" << delim << "value" << "\n";
            for (long row = 0; row < store.n_stored(); ++row) {
                out << store.iterations[static_cast<size_t>(row)] << delim
                    << (store.is_burnin(row) ? "burnin" : "imputation") << delim
                    << format_double(tr[static_cast<size_t>(row)]) << "\n";
            }
            break;
        }
        case PlotKind::acf: {
            std::vector<double> tr = post_trace(store, parameter);
            std::vector<long> lags = default_lags(tr.size());
            std::vector<double> rho = autocorrelation(tr, lags);
            out << "lag" << delim << "rho" << "\n";
            for (size_t i = 0; i < lags.size(); ++i)
                out << lags[i] << delim
                    << (std::isnan(rho[i]) ? std::string("NA") : format_double(rho[i])) << "\n";
            break;
        }
        case PlotKind::posterior: {
            PosteriorSummary s = posterior_summary(post_trace(store, parameter));
            out << "statistic" << delim << "value" << "\n";
            out << "mean" << delim << format_double(s.mean) << "\n";
            out << "sd" << delim << format_double(s.sd) << "\n";
            out << "2.5%" << delim << format_double(s.q2_5) << "\n";
            out << "50%" << delim << format_double(s.median) << "\n";
            out << "97.5%" << delim << format_double(s.q97_5) << "\n";
            break;
        }
    }
}

void export_plot_file(const ChainStore& store, const std::string& parameter,
                      PlotKind what, const std::string& path, char delim) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    export_plot_data(store, parameter, what, out, delim);
}

std::string plot_svg(const ChainStore& store, const std::string& parameter, PlotKind what) {
    Series s = series_for(store, parameter, what);

    const double w = 640, h = 320, m = 40;
    double xlo = *std::min_element(s.x.begin(), s.x.end());
    double xhi = *std::max_element(s.x.begin(), s.x.end());
    double ylo = s.y[0], yhi = s.y[0];
    for (double v : s.y)
        if (!std::isnan(v)) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    if (xhi == xlo) xhi = xlo + 1;
    if (yhi == ylo) yhi = ylo + 1;

    auto px = [&](double x) { return m + (x - xlo) / (xhi - xlo) * (w - 2 * m); };
    auto py = [&](double y) { return h - m - (y - ylo) / (yhi - ylo) * (h - 2 * m); };

    const char* kind = what == PlotKind::trace ? "trace"
                       : what == PlotKind::acf ? "autocorrelation"
                                               : "posterior";
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    out << "  <title>" << parameter << " " << kind << "</title>\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << m << "\" y1=\"" << h - m << "\" x2=\"" << w - m << "\" y2=\""
        << h - m << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << h - m
        << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << m << "\" y=\"" << m - 12 << "\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << parameter << " (" << kind << ")</text>\n";
    out << "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
    bool first = true;
    for (size_t i = 0; i < s.x.size(); ++i) {
        if (std::isnan(s.y[i])) continue;
        if (!first) out << " ";
        out << format_fixed(px(s.x[i]), 2) << "," << format_fixed(py(s.y[i]), 2);
        first = false;
    }
    out << "\"/>\n</svg>\n";
    return out.str();
}

}  // namespace nestmi
