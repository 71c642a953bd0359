#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "nestmi/diagnostics.hpp"
#include "nestmi/error.hpp"
#include "nestmi/rng.hpp"
#include "nestmi/text.hpp"

using namespace nestmi;

namespace {

std::vector<double> white_noise(size_t n, std::uint64_t seed) {
    Rng gen(seed);
    std::vector<double> x(n);
    for (double& v : x) v = gen.normal();
    return x;
}

// Stationary AR(1) with unit marginal variance, warmed up past the start.
std::vector<double> ar1(size_t n, double phi, std::uint64_t seed) {
    Rng gen(seed);
    double s = std::sqrt(1 - phi * phi);
    double x = gen.normal();
    for (int t = 0; t < 200; ++t) x = phi * x + s * gen.normal();
    std::vector<double> out(n);
    for (double& v : out) {
        x = phi * x + s * gen.normal();
        v = x;
    }
    return out;
}

ChainStore store_with(const std::vector<std::string>& names,
                      const std::vector<std::vector<double>>& traces,
                      long n_burn, int stride) {
    ChainStore c;
    c.names = names;
    c.n_burn = n_burn;
    c.stride = stride;
    size_t rows = traces[0].size();
    for (size_t t = 0; t < rows; ++t) {
        std::vector<double> row;
        for (const auto& tr : traces) row.push_back(tr[t]);
        c.append(static_cast<long>(t + 1) * stride, row);
    }
    return c;
}

}  // namespace

TEST_SUITE("diagnostics") {

// ---------------------------------------------------------------------------
// potential scale reduction
// ---------------------------------------------------------------------------

TEST_CASE("constant traces converge trivially") {
    std::vector<double> x(40, 3.25);
    Rhat r = potential_scale_reduction(x, 4);
    CHECK(r.value == 1.0);
    CHECK(r.n_segments == 4);
}

TEST_CASE("two-segment value matches the hand computation") {
    // Segments {1,2,3,4} and {5,6,7,8}: W = 5/3, B = 4 * var({2.5, 6.5}) = 32,
    // Rhat^2 = (0.75 * 5/3 + 8) / (5/3) = 5.55.
    std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8};
    Rhat r = potential_scale_reduction(x, 2);
    CHECK(r.value == doctest::Approx(std::sqrt(5.55)).epsilon(1e-12));
}

TEST_CASE("the remainder is dropped from the front") {
    std::vector<double> x = {99, 1, 2, 3, 4, 5, 6, 7, 8};
    Rhat r = potential_scale_reduction(x, 2);
    CHECK(r.value == doctest::Approx(std::sqrt(5.55)).epsilon(1e-12));
}

TEST_CASE("white noise sits near one") {
    Rhat r = potential_scale_reduction(white_noise(40000, 1001), 4);
    CHECK(r.value < 1.02);
    CHECK(r.value > std::sqrt(1.0 - 1.0 / 10000));  // hard floor at B = 0
}

TEST_CASE("a three-sigma drift is detected") {
    std::vector<double> x = white_noise(40000, 1002);
    for (size_t t = 0; t < x.size(); ++t)
        x[t] += 3.0 * static_cast<double>(t) / static_cast<double>(x.size() - 1);
    Rhat r = potential_scale_reduction(x, 4);
    CHECK(r.value > 1.05);
}

TEST_CASE("scale reduction is invariant under affine maps") {
    std::vector<double> x = white_noise(101, 1003);
    std::vector<double> y;
    for (double v : x) y.push_back(-3.7 * v + 11.0);
    double a = potential_scale_reduction(x, 4).value;
    double b = potential_scale_reduction(y, 4).value;
    CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("segment jumps with flat interiors blow up") {
    std::vector<double> x = {0, 0, 0, 0, 1, 1, 1, 1};
    CHECK(std::isinf(potential_scale_reduction(x, 2).value));
}

TEST_CASE("scale reduction preconditions") {
    std::vector<double> x(7, 0.0);
    CHECK_THROWS_AS(potential_scale_reduction(x, 4), ValidationError);
    CHECK_THROWS_AS(potential_scale_reduction(x, 1), ValidationError);
    CHECK_NOTHROW(potential_scale_reduction(std::vector<double>(8, 0.0), 4));
}

// ---------------------------------------------------------------------------
// autocorrelation
// ---------------------------------------------------------------------------

TEST_CASE("lag zero is exactly one") {
    std::vector<double> rho = autocorrelation(white_noise(50, 1004), {0});
    CHECK(rho[0] == 1.0);
}

TEST_CASE("small-sample autocorrelations match the hand computation") {
    std::vector<double> rho = autocorrelation({1, 2, 3, 4}, {0, 1, 2, 3});
    CHECK(rho[0] == 1.0);
    CHECK(rho[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(rho[2] == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(rho[3] == doctest::Approx(-0.45).epsilon(1e-12));
}

TEST_CASE("an AR(1) chain shows its coefficient at lag one") {
    std::vector<double> x = ar1(50000, 0.8, 1005);
    std::vector<double> rho = autocorrelation(x, {1, 2});
    CHECK(std::abs(rho[0] - 0.8) < 0.02);
    CHECK(std::abs(rho[1] - 0.64) < 0.03);
}

TEST_CASE("independent draws decorrelate") {
    std::vector<double> x = white_noise(50000, 1006);
    std::vector<double> rho = autocorrelation(x, {1, 2, 3, 4, 5});
    for (double r : rho) CHECK(std::abs(r) < 0.02);
}

TEST_CASE("zero-variance traces report undefined autocorrelation") {
    std::vector<double> rho = autocorrelation(std::vector<double>(20, 7.0), {0, 1, 2});
    for (double r : rho) CHECK(std::isnan(r));
}

TEST_CASE("autocorrelation is invariant under positive affine maps") {
    std::vector<double> x = white_noise(200, 1007);
    std::vector<double> y;
    for (double v : x) y.push_back(2.5 * v - 4.0);
    std::vector<double> a = autocorrelation(x, {1, 5, 10});
    std::vector<double> b = autocorrelation(y, {1, 5, 10});
    for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("lags outside the trace are rejected") {
    std::vector<double> x(10, 0.0);
    CHECK_THROWS_AS(autocorrelation(x, {10}), ValidationError);
    CHECK_THROWS_AS(autocorrelation(x, {-1}), ValidationError);
    CHECK_NOTHROW(autocorrelation(white_noise(10, 1), {9}));
}

// ---------------------------------------------------------------------------
// quantiles and posterior summaries
// ---------------------------------------------------------------------------

TEST_CASE("quantiles interpolate the order statistics") {
    std::vector<double> x = {5, 3, 1, 4, 2};  // sorting is the function's job
    CHECK(interpolated_quantile(x, 0.0) == 1.0);
    CHECK(interpolated_quantile(x, 1.0) == 5.0);
    CHECK(interpolated_quantile(x, 0.5) == 3.0);
    CHECK(interpolated_quantile(x, 0.025) == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(interpolated_quantile(x, 0.975) == doctest::Approx(4.9).epsilon(1e-12));
    CHECK_THROWS_AS(interpolated_quantile({}, 0.5), ValidationError);
    CHECK_THROWS_AS(interpolated_quantile(x, 1.5), ValidationError);
}

TEST_CASE("posterior summary of a constant trace") {
    PosteriorSummary s = posterior_summary(std::vector<double>(12, 5.0));
    CHECK(s.mean == 5.0);
    CHECK(s.sd == 0.0);
    CHECK(s.q2_5 == 5.0);
    CHECK(s.median == 5.0);
    CHECK(s.q97_5 == 5.0);
    CHECK(s.n == 12);
}

TEST_CASE("posterior summary of a small sample") {
    PosteriorSummary s = posterior_summary({1, 2, 3, 4, 5});
    CHECK(s.mean == 3.0);
    CHECK(s.sd == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(s.median == 3.0);
    CHECK(s.q2_5 == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(s.q97_5 == doctest::Approx(4.9).epsilon(1e-12));
}

TEST_CASE("posterior summary of a large normal sample") {
    PosteriorSummary s = posterior_summary(white_noise(50000, 1008));
    CHECK(std::abs(s.mean) < 0.02);
    CHECK(std::abs(s.sd - 1.0) < 0.02);
    CHECK(std::abs(s.q2_5 + 1.96) < 0.05);
    CHECK(std::abs(s.q97_5 - 1.96) < 0.05);
    CHECK(std::abs(s.median) < 0.03);
}

TEST_CASE("posterior summary rejects an empty trace") {
    CHECK_THROWS_AS(posterior_summary({}), ValidationError);
    PosteriorSummary s = posterior_summary({2.5});
    CHECK(s.mean == 2.5);
    CHECK(s.sd == 0.0);
}

// ---------------------------------------------------------------------------
// convergence report
// ---------------------------------------------------------------------------

TEST_CASE("all-constant traces produce a clean report") {
    ChainStore c = store_with({"zeta", "alpha", "mid"},
                              {std::vector<double>(20, 1.0), std::vector<double>(20, 2.0),
                               std::vector<double>(20, 3.0)},
                              0, 1);
    ConvergenceReport rep = convergence_report(c);
    CHECK(rep.rhat == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(rep.min == 1.0);
    CHECK(rep.max == 1.0);
    CHECK(rep.mean == 1.0);
    CHECK(rep.worst_rhat == 1.0);
    CHECK(rep.worst_name == "alpha");  // tie broken by name
    CHECK(rep.flagged.empty());
    CHECK(rep.threshold == 1.050);
    CHECK(rep.n_segments == 4);
}

TEST_CASE("a drifting parameter is singled out") {
    std::vector<double> a = white_noise(400, 1009);
    std::vector<double> b = white_noise(400, 1010);
    std::vector<double> c = white_noise(400, 1011);
    for (size_t t = 0; t < b.size(); ++t) b[t] += 6.0 * static_cast<double>(t) / 399.0;
    ChainStore store = store_with({"a", "b", "c"}, {a, b, c}, 0, 1);
    ConvergenceReport rep = convergence_report(store);
    CHECK(rep.worst_name == "b");
    REQUIRE(rep.flagged.size() == 1);
    CHECK(rep.flagged[0] == "b");
    CHECK(rep.max == rep.worst_rhat);
    CHECK(rep.max > 1.05);
    CHECK(rep.min < 1.05);
}

TEST_CASE("the summary block is the quantile of the per-parameter values") {
    std::vector<std::vector<double>> traces;
    std::vector<std::string> names;
    for (int k = 0; k < 5; ++k) {
        names.push_back("p" + std::to_string(k));
        std::vector<double> tr = white_noise(200, 1100 + static_cast<std::uint64_t>(k));
        for (size_t t = 0; t < tr.size(); ++t)
            tr[t] += k * 0.5 * static_cast<double>(t) / 199.0;
        traces.push_back(tr);
    }
    ChainStore store = store_with(names, traces, 0, 1);
    ConvergenceReport rep = convergence_report(store);
    CHECK(rep.q25 == doctest::Approx(interpolated_quantile(rep.rhat, 0.25)).epsilon(1e-15));
    CHECK(rep.q75 == doctest::Approx(interpolated_quantile(rep.rhat, 0.75)).epsilon(1e-15));
    double sum = 0;
    for (double v : rep.rhat) sum += v;
    CHECK(rep.mean == doctest::Approx(sum / 5.0).epsilon(1e-15));
}

TEST_CASE("flagged parameters sort by decreasing value") {
    std::vector<double> a = white_noise(400, 1012);
    std::vector<double> b = white_noise(400, 1013);
    std::vector<double> c = white_noise(400, 1014);
    for (size_t t = 0; t < 400; ++t) {
        b[t] += 6.0 * static_cast<double>(t) / 399.0;
        c[t] += 12.0 * static_cast<double>(t) / 399.0;
    }
    ChainStore store = store_with({"a", "b", "c"}, {a, b, c}, 0, 1);
    ConvergenceReport rep = convergence_report(store, 4, 0.5);
    REQUIRE(rep.flagged.size() == 3);
    CHECK(rep.flagged[0] == "c");
    CHECK(rep.flagged[1] == "b");
    CHECK(rep.worst_name == "c");
}

TEST_CASE("a store without post-burn-in rows is rejected") {
    ChainStore c = store_with({"a"}, {std::vector<double>(10, 1.0)}, 100, 1);
    CHECK_THROWS_AS(convergence_report(c), ValidationError);
    ChainStore empty;
    CHECK_THROWS_AS(convergence_report(empty), ValidationError);
}

TEST_CASE("report text carries the summary and the worst parameter") {
    std::vector<double> a = white_noise(400, 1015);
    std::vector<double> b = white_noise(400, 1016);
    for (size_t t = 0; t < 400; ++t) b[t] += 8.0 * static_cast<double>(t) / 399.0;
    ChainStore store = store_with({"Beta[1,1]", "Psi[1,1]"}, {a, b}, 0, 1);
    ConvergenceReport rep = convergence_report(store);

    std::ostringstream out;
    write_convergence_report(rep, out);
    std::string text = out.str();
    CHECK(text.find("Min") != std::string::npos);
    CHECK(text.find("Mean") != std::string::npos);
    CHECK(text.find("Largest Rhat: Psi[1,1]") != std::string::npos);
    CHECK(text.find("above the 1.050 threshold:") != std::string::npos);
    CHECK(text.find("  Psi[1,1]  ") != std::string::npos);

    ConvergenceReport clean = convergence_report(store_with({"x"}, {white_noise(400, 1017)}, 0, 1));
    std::ostringstream out2;
    write_convergence_report(clean, out2);
    CHECK(out2.str().find("All parameters are at or below") != std::string::npos);
}

// ---------------------------------------------------------------------------
// plot data export
// ---------------------------------------------------------------------------

TEST_CASE("trace export covers every stored iteration with its phase") {
    ChainStore c = store_with({"p"}, {{1, 2, 3, 4}}, 10, 5);
    std::ostringstream out;
    export_plot_data(c, "p", PlotKind::trace, out);
    CHECK(out.str() ==
          "iteration,phase,value\n"
          "5,burnin,1\n"
          "10,burnin,2\n"
          "15,imputation,3\n"
          "20,imputation,4\n");
}

TEST_CASE("acf export uses only the post-burn-in slice") {
    ChainStore c = store_with({"p"}, {{500, -500, 1, 2, 3, 4}}, 2, 1);
    std::ostringstream out;
    export_plot_data(c, "p", PlotKind::acf, out);
    CHECK(out.str() ==
          "lag,rho\n"
          "0,1\n"
          "1,0.25\n"
          "2,-0.3\n"
          "3,-0.45\n");
}

TEST_CASE("acf export writes NA for undefined values") {
    ChainStore c = store_with({"p"}, {{7, 7, 7, 7}}, 0, 1);
    std::ostringstream out;
    export_plot_data(c, "p", PlotKind::acf, out);
    CHECK(out.str().find("0,NA\n") != std::string::npos);
}

TEST_CASE("posterior export mirrors the summary statistics") {
    ChainStore c = store_with({"p"}, {{9, 1, 2, 3, 4, 5}}, 1, 1);
    PosteriorSummary s = posterior_summary(c.imputation_trace("p"));
    CHECK(s.mean == 3.0);  // the burn-in value 9 is excluded
    std::ostringstream out;
    export_plot_data(c, "p", PlotKind::posterior, out);
    std::string want = "statistic,value\nmean," + format_double(s.mean) + "\nsd," +
                       format_double(s.sd) + "\n2.5%," + format_double(s.q2_5) + "\n50%," +
                       format_double(s.median) + "\n97.5%," + format_double(s.q97_5) + "\n";
    CHECK(out.str() == want);
}

TEST_CASE("plot export rejects unknown parameters") {
    ChainStore c = store_with({"p"}, {{1, 2, 3, 4}}, 0, 1);
    std::ostringstream out;
    CHECK_THROWS_AS(export_plot_data(c, "qq", PlotKind::trace, out), ValidationError);
    CHECK_THROWS_AS(plot_svg(c, "qq", PlotKind::trace), ValidationError);
}

TEST_CASE("trace svg draws one vertex per stored iteration") {
    std::vector<double> tr = white_noise(60, 1018);
    ChainStore c = store_with({"p"}, {tr}, 30, 1);
    std::string svg = plot_svg(c, "p", PlotKind::trace);
    CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);

    size_t start = svg.find("points=\"");
    REQUIRE(start != std::string::npos);
    start += 8;
    size_t end = svg.find('"', start);
    std::string points = svg.substr(start, end - start);
    size_t vertices = 1;
    for (char ch : points)
        if (ch == ' ') ++vertices;
    CHECK(vertices == 60);
}

TEST_CASE("acf svg draws one vertex per lag") {
    ChainStore c = store_with({"p"}, {{1, 2, 3, 4}}, 0, 1);
    std::string svg = plot_svg(c, "p", PlotKind::acf);
    size_t start = svg.find("points=\"") + 8;
    std::string points = svg.substr(start, svg.find('"', start) - start);
    size_t vertices = 1;
    for (char ch : points)
        if (ch == ' ') ++vertices;
    CHECK(vertices == 4);  // lags 0..3 for a length-4 trace
}

TEST_CASE("posterior svg of a constant trace is a single spike") {
    ChainStore c = store_with({"p"}, {{5, 5, 5, 5}}, 0, 1);
    std::string svg = plot_svg(c, "p", PlotKind::posterior);
    size_t start = svg.find("points=\"") + 8;
    std::string points = svg.substr(start, svg.find('"', start) - start);
    CHECK(points.find(' ') == std::string::npos);
    CHECK(!points.empty());
}

}  // TEST_SUITE
