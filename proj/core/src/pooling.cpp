#include "nestmi/pooling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <ostream>
#include <tuple>

#include <Eigen/Cholesky>

#include "nestmi/error.hpp"
#include "nestmi/prob.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
    double m = mean_of(v), ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

double rubin_nu(int m, double riv) {
    if (riv == 0) return kInf;
    double f = 1 + 1 / riv;
    return (m - 1) * f * f;
}

double rubin_fmi(double riv, double nu) {
    if (std::isinf(riv)) return 1.0;
    if (std::isinf(nu)) return riv / (riv + 1);
    return (riv + 2 / (nu + 3)) / (riv + 1);
}

}  // namespace

PoolSummary pool_scalar(const std::vector<double>& estimates,
                        const std::vector<double>& within_variances) {
    if (estimates.size() < 2) throw ValidationError("pooling needs at least two imputations");
    if (within_variances.size() != estimates.size())
        throw ValidationError("one within-imputation variance is required per estimate");
    int m = static_cast<int>(estimates.size());

    PoolSummary s;
    s.estimate = mean_of(estimates);
    s.ubar = mean_of(within_variances);
    s.between = sample_var(estimates);
    double infl = 1.0 + 1.0 / m;
    s.total = s.ubar + infl * s.between;
    s.se = std::sqrt(s.total);
    s.riv = s.between == 0 ? 0.0 : infl * s.between / s.ubar;
    s.nu = rubin_nu(m, s.riv);
    s.fmi = rubin_fmi(s.riv, s.nu);
    s.tstat = s.se == 0 ? 0.0 : s.estimate / s.se;
    s.p = t_pvalue_two_sided(s.tstat, s.nu);
    return s;
}

double barnard_rubin_df(int m, double between, double within, double df_com) {
    if (df_com <= 0) throw ValidationError("complete-data degrees of freedom must be positive");
    double infl = 1.0 + 1.0 / m;
    double total = within + infl * between;
    double gamma = total == 0 ? 0.0 : infl * between / total;
    double nu_obs = (df_com + 1) / (df_com + 3) * df_com * (1 - gamma);
    double riv = between == 0 ? 0.0 : infl * between / within;
    double nu = rubin_nu(m, riv);
    if (std::isinf(nu)) return nu_obs;
    return 1.0 / (1.0 / nu + 1.0 / nu_obs);
}

PooledEstimates pool_estimates(const std::vector<LmmFit>& fits, bool small_sample) {
    if (fits.size() < 2) throw ValidationError("pooling needs at least two imputations");
    int m = static_cast<int>(fits.size());
    const LmmFit& first = fits.front();
    for (const LmmFit& f : fits) {
        if (f.coef_names != first.coef_names || f.random_names != first.random_names)
            throw ValidationError("parameter names differ across the fits being pooled");
    }

    PooledEstimates out;
    out.m = m;
    out.df_com = first.df_com;
    out.small_sample = small_sample;
    out.names = first.coef_names;

    for (int j = 0; j < first.p(); ++j) {
        std::vector<double> est, var;
        for (const LmmFit& f : fits) {
            est.push_back(f.beta(j));
            var.push_back(f.vcov(j, j));
        }
        PoolSummary s = pool_scalar(est, var);
        if (small_sample) {
            s.nu = barnard_rubin_df(m, s.between, s.ubar, out.df_com);
            s.p = t_pvalue_two_sided(s.tstat, s.nu);
            s.fmi = rubin_fmi(s.riv, s.nu);
        }
        out.params.push_back(s);
    }

    int q = first.q();
    for (int c = 0; c < q; ++c)
        for (int rix = c; rix < q; ++rix) {
            double s = 0;
            for (const LmmFit& f : fits) s += f.G(rix, c);
            const std::string& a = first.random_names[static_cast<size_t>(rix)];
            const std::string& b = first.random_names[static_cast<size_t>(c)];
            out.component_names.push_back(rix == c ? "Var(" + a + ")"
                                                   : "Cov(" + a + "," + b + ")");
            out.components.push_back(s / m);
        }
    double sr = 0;
    for (const LmmFit& f : fits) sr += f.sigma2;
    out.component_names.push_back("Var(Residual)");
    out.components.push_back(sr / m);
    return out;
}

namespace {

std::string pad_left(const std::string& s, size_t w) {
    if (s.size() >= w) return s;
    return std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, size_t w) {
    if (s.size() >= w) return s;
    return s + std::string(w - s.size(), ' ');
}

std::string df_cell(double nu) {
    if (std::isinf(nu)) return "Inf";
    return format_fixed(nu, 1);
}

}  // namespace

void write_pooled_estimates(const PooledEstimates& e, std::ostream& out) {
    size_t name_w = 9;
    for (const std::string& n : e.names) name_w = std::max(name_w, n.size());
    for (const std::string& n : e.component_names) name_w = std::max(name_w, n.size());
    name_w += 2;
    const size_t w = 10;

    out << "Pooled estimates over m = " << e.m << " imputations"
        << (e.small_sample ? " (small-sample df)" : "") << "\n\n";
    out << pad_right("", name_w) << pad_left("Estimate", w) << pad_left("Std.Error", w)
        << pad_left("t.value", w) << pad_left("df", w) << pad_left("p.value", w)
        << pad_left("RIV", w) << pad_left("FMI", w) << "\n";
    for (size_t j = 0; j < e.names.size(); ++j) {
        const PoolSummary& s = e.params[j];
        out << pad_right(e.names[j], name_w) << pad_left(format_fixed(s.estimate, 3), w)
            << pad_left(format_fixed(s.se, 3), w) << pad_left(format_fixed(s.tstat, 3), w)
            << pad_left(df_cell(s.nu), w) << pad_left(format_fixed(s.p, 3), w)
            << pad_left(format_fixed(s.riv, 3), w) << pad_left(format_fixed(s.fmi, 3), w)
            << "\n";
    }
    out << "\nVariance components:\n\n";
    out << pad_right("", name_w) << pad_left("Estimate", w) << "\n";
    for (size_t j = 0; j < e.component_names.size(); ++j)
        out << pad_right(e.component_names[j], name_w)
            << pad_left(format_fixed(e.components[j], 3), w) << "\n";
}

// ---------------------------------------------------------------------------
// Constraint expressions
// ---------------------------------------------------------------------------

namespace {

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

}  // namespace

Constraint::Constraint(const std::string& text, const std::vector<std::string>& names)
    : n_params_(static_cast<int>(names.size())), text_(text) {
    size_t pos = 0;

    auto skip_ws = [&] {
        while (pos < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos]))) ++pos;
    };
    auto make = [&](Node n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    };

    // Longest known parameter name starting at pos, respecting word
    // boundaries for names that end in an identifier character.
    auto match_param = [&]() -> int {
        int best = -1;
        size_t best_len = 0;
        for (size_t k = 0; k < names.size(); ++k) {
            const std::string& n = names[k];
            if (n.empty() || n.size() < best_len) continue;
            if (text_.compare(pos, n.size(), n) != 0) continue;
            if (ident_char(n.back()) && pos + n.size() < text_.size() &&
                ident_char(text_[pos + n.size()]))
                continue;
            if (n.size() > best_len) {
                best = static_cast<int>(k);
                best_len = n.size();
            }
        }
        if (best >= 0) pos += best_len;
        return best;
    };

    std::function<int()> parse_expr;

    std::function<int()> parse_primary = [&]() -> int {
        skip_ws();
        if (pos >= text_.size()) throw ParseError("unexpected end of constraint", pos);
        char c = text_[pos];
        if (c == '-' || c == '+') {
            ++pos;
            int inner = parse_primary();
            if (c == '+') return inner;
            Node n;
            n.kind = Kind::negate;
            n.lhs = inner;
            return make(n);
        }
        int p = match_param();
        if (p >= 0) {
            Node n;
            n.kind = Kind::param;
            n.param = p;
            return make(n);
        }
        if (c == '(') {
            ++pos;
            int inner = parse_expr();
            skip_ws();
            if (pos >= text_.size() || text_[pos] != ')')
                throw ParseError("expected ')'", pos);
            ++pos;
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* start = text_.c_str() + pos;
            char* end = nullptr;
            double v = std::strtod(start, &end);
            if (end == start) throw ParseError("malformed number", pos);
            pos += static_cast<size_t>(end - start);
            Node n;
            n.kind = Kind::number;
            n.num = v;
            return make(n);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos;
            while (pos < text_.size() && ident_char(text_[pos])) ++pos;
            throw ParseError("unknown parameter name '" + text_.substr(start, pos - start) + "'",
                             start);
        }
        throw ParseError(std::string("unexpected character '") + c + "'", pos);
    };

    std::function<int()> parse_term = [&]() -> int {
        int lhs = parse_primary();
        for (;;) {
            skip_ws();
            if (pos >= text_.size() || (text_[pos] != '*' && text_[pos] != '/')) return lhs;
            char op = text_[pos];
            ++pos;
            int rhs = parse_primary();
            Node n;
            n.kind = Kind::binary;
            n.op = op;
            n.lhs = lhs;
            n.rhs = rhs;
            lhs = make(n);
        }
    };

    parse_expr = [&]() -> int {
        int lhs = parse_term();
        for (;;) {
            skip_ws();
            if (pos >= text_.size() || (text_[pos] != '+' && text_[pos] != '-')) return lhs;
            char op = text_[pos];
            ++pos;
            int rhs = parse_term();
            Node n;
            n.kind = Kind::binary;
            n.op = op == '+' ? '+' : '-';
            n.lhs = lhs;
            n.rhs = rhs;
            lhs = make(n);
        }
    };

    skip_ws();
    if (pos >= text_.size()) throw ParseError("empty constraint expression", 0);
    root_ = parse_expr();
    skip_ws();
    if (pos != text_.size()) throw ParseError("unexpected text after expression", pos);
}

double Constraint::eval(int node, const Vector& params) const {
    const Node& n = nodes_[static_cast<size_t>(node)];
    switch (n.kind) {
        case Kind::number:
            return n.num;
        case Kind::param:
            return params(n.param);
        case Kind::negate:
            return -eval(n.lhs, params);
        case Kind::binary: {
            double a = eval(n.lhs, params), b = eval(n.rhs, params);
            switch (n.op) {
                case '+':
                    return a + b;
                case '-':
                    return a - b;
                case '*':
                    return a * b;
                default:
                    return a / b;
            }
        }
    }
    return 0;  // unreachable
}

double Constraint::value(const Vector& params) const {
    if (params.size() != n_params_)
        throw ValidationError("constraint evaluated with the wrong number of parameters");
    return eval(root_, params);
}

namespace {

Vector constraint_gradient(const Constraint& g, const Vector& theta) {
    Vector grad(theta.size());
    Vector probe = theta;
    for (int i = 0; i < theta.size(); ++i) {
        double h = 1e-6 * std::max(1.0, std::abs(theta(i)));
        probe(i) = theta(i) + h;
        double up = g.value(probe);
        probe(i) = theta(i) - h;
        double dn = g.value(probe);
        probe(i) = theta(i);
        grad(i) = (up - dn) / (2 * h);
    }
    return grad;
}

}  // namespace

DeltaResult delta_method(const Vector& estimates, const Matrix& vcov, const Constraint& g) {
    DeltaResult r;
    r.value = g.value(estimates);
    Vector grad = constraint_gradient(g, estimates);
    r.variance = grad.dot(vcov * grad);
    return r;
}

// ---------------------------------------------------------------------------
// Pooled multiparameter tests
// ---------------------------------------------------------------------------

namespace {

// df2 of the Li family: shared between D1 and D3.
double li_df2(int k, int m, double r) {
    if (r == 0) return kInf;
    double t = static_cast<double>(k) * (m - 1);
    if (t > 4) {
        double f = 1 + (1 - 2 / t) / r;
        return 4 + (t - 4) * f * f;
    }
    double f = 1 + 1 / r;
    return t * (1 + 1.0 / k) * f * f / 2;
}

void add_fmi_spread_note(const std::vector<double>& fmis, DTestResult& out) {
    if (fmis.size() < 2) return;
    double lo = *std::min_element(fmis.begin(), fmis.end());
    double hi = *std::max_element(fmis.begin(), fmis.end());
    if (hi - lo > 0.2)
        out.notes.push_back(
            "fractions of missing information differ by more than 0.2 across parameters; "
            "the pooled test assumes they are similar");
}

}  // namespace

DTestResult pool_constraints(const std::vector<LmmFit>& fits,
                             const std::vector<std::string>& constraints) {
    if (fits.size() < 2) throw ValidationError("pooling needs at least two imputations");
    if (constraints.empty()) throw ValidationError("no constraints supplied");
    int m = static_cast<int>(fits.size());
    int k = static_cast<int>(constraints.size());
    const std::vector<std::string>& names = fits.front().coef_names;
    for (const LmmFit& f : fits)
        if (f.coef_names != names)
            throw ValidationError("parameter names differ across the fits being pooled");

    std::vector<Constraint> parsed;
    parsed.reserve(constraints.size());
    for (const std::string& c : constraints) parsed.emplace_back(c, names);

    Matrix qhat(k, m);        // one column per imputation
    Matrix ubar = Matrix::Zero(k, k);
    for (int l = 0; l < m; ++l) {
        const LmmFit& f = fits[static_cast<size_t>(l)];
        Matrix jac(k, f.p());
        for (int i = 0; i < k; ++i) {
            qhat(i, l) = parsed[static_cast<size_t>(i)].value(f.beta);
            jac.row(i) = constraint_gradient(parsed[static_cast<size_t>(i)], f.beta).transpose();
        }
        ubar += jac * f.vcov * jac.transpose();
    }
    ubar /= m;

    Vector qbar = qhat.rowwise().mean();
    Matrix centered = qhat.colwise() - qbar;
    Matrix b = centered * centered.transpose() / double(m - 1);

    Eigen::LLT<Matrix> llt(ubar);
    if (llt.info() != Eigen::Success)
        throw NumericalError("pooled within-imputation covariance of the constraints is singular");

    DTestResult out;
    out.procedure = "D1";
    out.df1 = k;
    out.r = (1.0 + 1.0 / m) * llt.solve(b).trace() / k;
    out.F = qbar.dot(llt.solve(qbar)) / (k * (1 + out.r));
    out.df2 = li_df2(k, m, out.r);
    out.p = f_pvalue(out.F, out.df1, out.df2);

    std::vector<double> fmis;
    for (int i = 0; i < k; ++i) {
        std::vector<double> est, var;
        for (int l = 0; l < m; ++l) {
            est.push_back(qhat(i, l));
            var.push_back(ubar(i, i));  // common Ubar diagonal
        }
        fmis.push_back(pool_scalar(est, var).fmi);
    }
    add_fmi_spread_note(fmis, out);
    return out;
}

DTestResult pool_chisq_d2(const std::vector<double>& stats, int k) {
    if (stats.size() < 2) throw ValidationError("pooling needs at least two imputations");
    if (k < 1) throw ValidationError("the tested statistics need at least one degree of freedom");
    for (double s : stats)
        if (!(s >= 0)) throw ValidationError("chi-square statistics must be nonnegative");
    int m = static_cast<int>(stats.size());

    std::vector<double> roots;
    roots.reserve(stats.size());
    for (double s : stats) roots.push_back(std::sqrt(s));

    DTestResult out;
    out.procedure = "D2";
    out.df1 = k;
    double dbar = mean_of(stats);
    out.r = (1.0 + 1.0 / m) * sample_var(roots);
    if (out.r == 0) {
        out.F = dbar / k;
        out.df2 = kInf;
    } else {
        out.F = (dbar / k - (double(m + 1) / (m - 1)) * out.r) / (1 + out.r);
        if (out.F < 0) {
            out.F = 0;
            out.notes.push_back("pooled statistic fell below zero and was floored");
        }
        double f = 1 + 1 / out.r;
        out.df2 = std::pow(double(k), -3.0 / m) * (m - 1) * f * f;
    }
    out.p = f_pvalue(out.F, out.df1, out.df2);
    return out;
}

namespace {

int total_parameters(const LmmFit& f) {
    return f.p() + f.q() * (f.q() + 1) / 2 + 1;
}

}  // namespace

DTestResult pool_lrt_d3(const std::vector<LmmFit>& fits_full,
                        const std::vector<LmmFit>& fits_null,
                        const AnalysisModel& model_full, const AnalysisModel& model_null,
                        const std::vector<Dataset>& datasets) {
    if (fits_full.size() < 2) throw ValidationError("pooling needs at least two imputations");
    if (fits_null.size() != fits_full.size() || datasets.size() != fits_full.size())
        throw ValidationError("the two fit lists and the datasets must have matching lengths");
    for (const LmmFit& f : fits_full)
        if (f.method != EstMethod::ML)
            throw ValidationError("likelihood-ratio pooling requires maximum likelihood fits");
    for (const LmmFit& f : fits_null)
        if (f.method != EstMethod::ML)
            throw ValidationError("likelihood-ratio pooling requires maximum likelihood fits");
    int m = static_cast<int>(fits_full.size());

    int k = total_parameters(fits_full.front()) - total_parameters(fits_null.front());
    if (k < 0)
        throw ValidationError("the null model has more parameters than the full model");

    DTestResult out;
    out.procedure = "D3";
    out.df1 = k;
    if (k == 0) {  // self-comparison degenerates cleanly
        out.df2 = kInf;
        out.F = 0;
        out.p = 1;
        return out;
    }

    double dbar = 0;
    for (int l = 0; l < m; ++l)
        dbar += 2 * (fits_full[static_cast<size_t>(l)].loglik -
                     fits_null[static_cast<size_t>(l)].loglik);
    dbar /= m;

    auto averaged = [m](const std::vector<LmmFit>& fits) {
        Vector beta = Vector::Zero(fits.front().p());
        Matrix g = Matrix::Zero(fits.front().q(), fits.front().q());
        double s2 = 0;
        for (const LmmFit& f : fits) {
            beta += f.beta;
            g += f.G;
            s2 += f.sigma2;
        }
        return std::make_tuple(Vector(beta / m), Matrix(g / m), s2 / m);
    };
    auto [beta_f, g_f, s2_f] = averaged(fits_full);
    auto [beta_n, g_n, s2_n] = averaged(fits_null);

    double dtilde = 0;
    for (int l = 0; l < m; ++l) {
        const Dataset& d = datasets[static_cast<size_t>(l)];
        dtilde += 2 * (loglik_at(model_full, d, beta_f, g_f, s2_f) -
                       loglik_at(model_null, d, beta_n, g_n, s2_n));
    }
    dtilde /= m;

    out.r = (double(m + 1) / (k * (m - 1))) * (dbar - dtilde);
    if (out.r < 0) {
        out.r = 0;
        out.notes.push_back("negative between-imputation variance estimate clamped to zero");
    }
    out.F = dtilde / (k * (1 + out.r));
    if (out.F < 0) {
        out.F = 0;
        out.notes.push_back("pooled statistic fell below zero and was floored");
    }
    out.df2 = li_df2(k, m, out.r);
    out.p = f_pvalue(out.F, out.df1, out.df2);

    std::vector<double> fmis;
    for (int j = 0; j < fits_full.front().p(); ++j) {
        std::vector<double> est, var;
        for (const LmmFit& f : fits_full) {
            est.push_back(f.beta(j));
            var.push_back(f.vcov(j, j));
        }
        fmis.push_back(pool_scalar(est, var).fmi);
    }
    add_fmi_spread_note(fmis, out);
    return out;
}

void write_dtest(const DTestResult& t, std::ostream& out) {
    out << t.procedure << ": F = " << format_fixed(t.F, 3) << ", df1 = " << t.df1 << ", df2 = "
        << (std::isinf(t.df2) ? std::string("Inf") : format_fixed(t.df2, 1))
        << ", p = " << format_fixed(t.p, 3) << ", RIV = " << format_fixed(t.r, 3) << "\n";
    for (const std::string& n : t.notes) out << "  note: " << n << "\n";
}

}  // namespace nestmi
