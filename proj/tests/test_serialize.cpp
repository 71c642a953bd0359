#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nestmi/error.hpp"
#include "nestmi/gibbs.hpp"
#include "nestmi/lmm.hpp"
#include "nestmi/pooling.hpp"
#include "nestmi/serialize.hpp"
#include "nestmi/synthetic.hpp"

using namespace nestmi;
namespace fs = std::filesystem;

namespace {

bool contains(const std::string& text, const std::string& needle) {
    return text.find(needle) != std::string::npos;
}

// Fresh per-case scratch directory under the test runner's working dir.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("serialize_tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset small_dataset(std::uint64_t seed) {
    Matrix beta(2, 1);
    beta << 1.0, 0.5;
    Matrix psi(1, 1);
    psi << 0.4;
    Matrix sigma(1, 1);
    sigma << 1.0;
    return generate_two_level(12, 6, beta, psi, sigma, seed);
}

LmmFit small_fit(std::uint64_t seed, EstMethod method = EstMethod::REML) {
    AnalysisModel model{parse_formula("y1 ~ 1 + x1 + (1|g)"), method};
    return fit_lmm(model, small_dataset(seed));
}

bool same_matrix(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_fit(const LmmFit& a, const LmmFit& b) {
    return a.coef_names == b.coef_names && (a.beta.array() == b.beta.array()).all() &&
           same_matrix(a.vcov, b.vcov) && a.random_names == b.random_names &&
           same_matrix(a.G, b.G) && a.sigma2 == b.sigma2 && a.loglik == b.loglik &&
           a.deviance == b.deviance && a.method == b.method && a.df_com == b.df_com &&
           a.n_obs == b.n_obs && a.n_groups == b.n_groups && a.converged == b.converged &&
           a.boundary == b.boundary && a.n_evals == b.n_evals;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

std::string dataset_text(const Dataset& d) {
    std::ostringstream out;
    write_dataset(d, out);
    return out.str();
}

}  // namespace

TEST_SUITE("serialize") {

TEST_CASE("fit json round trip is exact") {
    const LmmFit f = small_fit(11);
    const LmmFit back = fit_from_json(fit_to_json(f));
    CHECK(same_fit(f, back));
    CHECK(back.method == EstMethod::REML);

    const LmmFit ml = small_fit(11, EstMethod::ML);
    CHECK(same_fit(ml, fit_from_json(fit_to_json(ml))));
}

TEST_CASE("fit json is deterministic and carries every field") {
    const LmmFit f = small_fit(3);
    const std::string a = fit_to_json(f);
    CHECK(a == fit_to_json(small_fit(3)));
    CHECK(a.back() == '\n');

    const auto j = nlohmann::json::parse(a);
    for (const char* key : {"coef_names", "beta", "vcov", "random_names", "G", "sigma2", "loglik",
                            "deviance", "method", "df_com", "n_obs", "n_groups", "converged",
                            "boundary", "n_evals"}) {
        CHECK(j.contains(key));
    }
    CHECK(j["method"] == "REML");
    CHECK(j["coef_names"].size() == 2);
    CHECK(j["vcov"].size() == 2);
    CHECK(j["vcov"][0].size() == 2);
}

TEST_CASE("fit reader ignores unknown keys and maps null to NaN") {
    const LmmFit f = small_fit(5);
    auto j = nlohmann::ordered_json::parse(fit_to_json(f));
    j["comment"] = "extra";
    j["loglik"] = nullptr;
    const LmmFit back = fit_from_json(j.dump());
    CHECK(std::isnan(back.loglik));
    CHECK(back.sigma2 == f.sigma2);
}

TEST_CASE("fit reader rejects structural violations") {
    const std::string good = fit_to_json(small_fit(7));
    auto mutate = [&](auto&& change) {
        auto j = nlohmann::ordered_json::parse(good);
        change(j);
        return j.dump();
    };

    CHECK_THROWS_WITH_AS(fit_from_json(mutate([](auto& j) { j.erase("beta"); })),
                         "fit object is missing 'beta'", ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["method"] = "GLS"; })), ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["coef_names"] = {"only"}; })),
                    ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["vcov"] = {{1.0, 0.0}}; })),
                    ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["G"] = {{1.0, 0.0}}; })),
                    ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["converged"] = 1; })), ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) { j["n_obs"] = 1.5; })), ValidationError);
    CHECK_THROWS_AS(fit_from_json(mutate([](auto& j) {
                        j["vcov"] = nlohmann::ordered_json::array(
                            {nlohmann::ordered_json::array({1.0, 0.0}),
                             nlohmann::ordered_json::array({1.0})});
                    })),
                    ValidationError);
    CHECK_THROWS_AS(fit_from_json("[1, 2]"), ValidationError);
}

TEST_CASE("malformed json reports a byte offset") {
    try {
        fit_from_json("{\"coef_names\": [}");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 16);
    }
}

TEST_CASE("fits directory reads in numeric file order") {
    TempDir tmp("fits_dir");
    std::vector<LmmFit> fits;
    for (int l = 0; l < 12; ++l) fits.push_back(small_fit(100 + static_cast<std::uint64_t>(l)));
    for (int l = 0; l < 12; ++l) {
        char name[32];
        std::snprintf(name, sizeof name, "fit_%03d.json", l + 1);
        write_fit_file(fits[static_cast<size_t>(l)], tmp.file(name));
    }
    const std::vector<LmmFit> back = read_fits_dir(tmp.path.string());
    REQUIRE(back.size() == 12);
    for (int l = 0; l < 12; ++l) CHECK(same_fit(fits[static_cast<size_t>(l)], back[static_cast<size_t>(l)]));
}

TEST_CASE("fits directory errors carry the file name") {
    TempDir tmp("fits_bad");
    std::ofstream(tmp.file("fit_001.json")) << "{ broken";
    CHECK_THROWS_WITH_AS(read_fits_dir(tmp.path.string()),
                         doctest::Contains("fit_001.json"), ValidationError);

    TempDir empty("fits_empty");
    CHECK_THROWS_WITH_AS(read_fits_dir(empty.path.string()),
                         doctest::Contains("no .json fit files"), ValidationError);
    CHECK_THROWS_WITH_AS(read_fits_dir(tmp.file("nowhere")),
                         doctest::Contains("cannot read directory"), ValidationError);
}

TEST_CASE("spec json round trips with and without a prior") {
    ImputationSpec s;
    s.formula = "y1 + y2 ~ 1 + x1 + (1|g)";
    s.n_burn = 5000;
    s.n_between = 100;
    s.m = 10;
    s.seed = 424242;
    s.trace_stride = 5;
    s.flat = true;

    ImputationSpec back = spec_from_json(spec_to_json(s));
    CHECK(back.formula == s.formula);
    CHECK(back.n_burn == 5000);
    CHECK(back.n_between == 100);
    CHECK(back.m == 10);
    CHECK(back.seed == 424242);
    CHECK(back.trace_stride == 5);
    CHECK(back.flat);
    CHECK_FALSE(back.prior.has_value());

    Prior prior;
    prior.nu_sigma = 2.0;
    prior.lambda_sigma = Matrix::Identity(2, 2) * 1.25;
    prior.nu_psi = 2.0;
    prior.lambda_psi = Matrix::Identity(2, 2) * 0.5;
    s.prior = prior;
    back = spec_from_json(spec_to_json(s));
    REQUIRE(back.prior.has_value());
    CHECK(back.prior->nu_sigma == 2.0);
    CHECK(same_matrix(back.prior->lambda_sigma, prior.lambda_sigma));
    CHECK(same_matrix(back.prior->lambda_psi, prior.lambda_psi));
}

TEST_CASE("spec reader applies defaults and tolerates cli config keys") {
    const ImputationSpec s = spec_from_json(
        "{\"command\": \"impute\", \"data\": \"d.csv\", \"out\": \"run/\","
        " \"formula\": \"y ~ 1 + (1|g)\", \"m\": 3}");
    CHECK(s.formula == "y ~ 1 + (1|g)");
    CHECK(s.m == 3);
    CHECK(s.n_burn == 0);
    CHECK(s.n_between == 1);
    CHECK(s.seed == 0);
    CHECK(s.trace_stride == 10);
    CHECK_FALSE(s.flat);

    CHECK_THROWS_WITH_AS(spec_from_json("{\"m\": 3}"), "run config is missing 'formula'",
                         ValidationError);
    CHECK_THROWS_AS(spec_from_json("{\"formula\": \"y ~ 1 + (1|g)\", \"m\": \"three\"}"),
                    ValidationError);
    CHECK_THROWS_AS(spec_from_json("{\"formula\": \"y ~ 1 + (1|g)\", \"prior\": {\"nu_sigma\": 1}}"),
                    ValidationError);
}

TEST_CASE("report json mirrors the printed tables") {
    LmmFit a = small_fit(21);
    LmmFit b = small_fit(22);
    const PooledEstimates pooled = pool_estimates({a, b});
    const auto j = nlohmann::json::parse(pooled_estimates_to_json(pooled));
    CHECK(j["m"] == 2);
    REQUIRE(j["parameters"].size() == pooled.names.size());
    CHECK(j["parameters"][0]["name"] == pooled.names[0]);
    CHECK(j["parameters"][0]["estimate"].get<double>() == pooled.params[0].estimate);
    CHECK(j["parameters"][0]["fmi"].get<double>() == pooled.params[0].fmi);
    REQUIRE(j["components"].size() == pooled.component_names.size());
    CHECK(j["components"][0]["name"] == "Var((Intercept))");

    DTestResult t;
    t.procedure = "D2";
    t.F = 1.5;
    t.df1 = 2;
    t.df2 = std::numeric_limits<double>::infinity();
    t.p = 0.25;
    t.r = 0.0;
    t.notes = {"a note"};
    const auto jt = nlohmann::json::parse(dtest_to_json(t));
    CHECK(jt["df2"].is_null());
    CHECK(jt["F"].get<double>() == 1.5);
    CHECK(jt["notes"][0] == "a note");
}

TEST_CASE("convergence report json lists parameters in store order") {
    ChainStore store;
    store.names = {"Beta[1,1]", "Sigma[1,1]"};
    store.n_burn = 100;
    Rng gen(99);
    for (long it = 1; it <= 200; ++it) {
        store.append(it, {gen.normal(), 1.0 + gen.normal()});
    }
    const ConvergenceReport rep = convergence_report(store);
    const auto j = nlohmann::json::parse(convergence_to_json(rep));
    REQUIRE(j["parameters"].size() == 2);
    CHECK(j["parameters"][0]["name"] == "Beta[1,1]");
    CHECK(j["summary"].contains("q75"));
    CHECK(j["worst"]["name"] == rep.worst_name);
    CHECK(j["threshold"].get<double>() == 1.050);
}

TEST_CASE("long format stacks datasets with a leading index column") {
    Dataset d1 = small_dataset(31);
    Dataset d2 = small_dataset(32);
    AmputeSpec holes;
    holes.mechanism = Mechanism::MCAR;
    holes.rates = {{"y1", 0.2}};
    holes.seed = 9;
    d1 = ampute(d1, holes);

    std::ostringstream out;
    write_imputations_long({d1, d2}, out);
    const auto lines = lines_of(out.str());
    REQUIRE(lines.size() == 1 + 2 * 72);
    CHECK(lines[0] == ".imp,g,y1,x1");

    const auto d1_lines = lines_of(dataset_text(d1));
    for (size_t i = 1; i < d1_lines.size(); ++i) {
        CHECK(lines[i] == "1," + d1_lines[i]);
    }

    std::istringstream in(out.str());
    const std::vector<Dataset> back = read_imputations_long(in, {"g", {}});
    REQUIRE(back.size() == 2);
    CHECK(dataset_text(back[0]) == dataset_text(d1));
    CHECK(dataset_text(back[1]) == dataset_text(d2));
    CHECK(back[0].group_pos() == d1.group_pos());
    CHECK(back[0].n_groups() == d1.n_groups());
}

TEST_CASE("long format reader accepts the index column anywhere") {
    std::istringstream in("y,.imp,g\n1.5,1,a\n2.5,1,b\n1,2,a\n2,2,b\n");
    const std::vector<Dataset> back = read_imputations_long(in, {"g", {}});
    REQUIRE(back.size() == 2);
    CHECK(back[0].var_names() == std::vector<std::string>{"y"});
    CHECK(back[0].column("y")(1) == 2.5);
    CHECK(back[1].column("y")(0) == 1.0);
    CHECK(back[0].group_pos() == 1);

    std::istringstream strict("y,.imp,g\n1.5,1,a\n");
    CHECK_THROWS_WITH_AS(read_imputations_long(strict, {"g", {"g", "y"}}),
                         "header does not match expected columns", ValidationError);
}

TEST_CASE("long format reader rejects bad indices") {
    std::istringstream no_imp("y,g\n1,a\n");
    CHECK_THROWS_WITH_AS(read_imputations_long(no_imp, {"g", {}}),
                         "long format requires a '.imp' index column", ValidationError);

    std::istringstream frac(".imp,y,g\n1.5,1,a\n");
    CHECK_THROWS_WITH_AS(read_imputations_long(frac, {"g", {}}),
                         "invalid imputation index at row 1", ValidationError);

    std::istringstream zero(".imp,y,g\n0,1,a\n");
    CHECK_THROWS_AS(read_imputations_long(zero, {"g", {}}), ValidationError);

    std::istringstream gap(".imp,y,g\n1,1,a\n3,2,a\n");
    CHECK_THROWS_WITH_AS(read_imputations_long(gap, {"g", {}}),
                         "imputation index 2 has no rows", ValidationError);

    std::istringstream na(".imp,y,g\nNA,1,a\n");
    CHECK_THROWS_AS(read_imputations_long(na, {"g", {}}), ValidationError);
}

TEST_CASE("write rejects datasets with different layouts") {
    const Dataset d1 = small_dataset(41);
    const Dataset d2 = generate_two_level(4, 3, Matrix::Zero(1, 1), Matrix::Zero(1, 1),
                                          Matrix::Identity(1, 1), 1);
    std::ostringstream out;
    CHECK_THROWS_WITH_AS(write_imputations_long({d1, d2}, out),
                         "datasets do not share one column layout", ValidationError);
    CHECK_THROWS_WITH_AS(write_imputations_long({}, out), "no datasets to write",
                         ValidationError);
}

TEST_CASE("imputation directory round trips under imp_ naming") {
    TempDir tmp("imps");
    std::vector<Dataset> imps;
    for (std::uint64_t s = 1; s <= 11; ++s) imps.push_back(small_dataset(50 + s));
    write_imputations_dir(imps, tmp.path.string());

    CHECK(fs::exists(tmp.file("imp_001.csv")));
    CHECK(fs::exists(tmp.file("imp_011.csv")));

    const std::vector<Dataset> back = read_imputations_dir(tmp.path.string(), {"g", {}});
    REQUIRE(back.size() == 11);
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(dataset_text(back[i]) == dataset_text(imps[i]));
    }

    TempDir empty("imps_empty");
    CHECK_THROWS_WITH_AS(read_imputations_dir(empty.path.string(), {"g", {}}),
                         doctest::Contains("no imp_* dataset files"), ValidationError);
}

}  // TEST_SUITE
