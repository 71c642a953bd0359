#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nestmi/dataset.hpp"
#include "nestmi/diagnostics.hpp"
#include "nestmi/error.hpp"
#include "nestmi/formula.hpp"
#include "nestmi/gibbs.hpp"
#include "nestmi/lmm.hpp"
#include "nestmi/pooling.hpp"
#include "nestmi/serialize.hpp"
#include "nestmi/synthetic.hpp"
#include "nestmi/transforms.hpp"

namespace nestmi {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config files and flag/config merging
// ---------------------------------------------------------------------------

// Flags override JSON config values; defaults apply last. The merged values
// are what runs and what gets echoed to the output directory.
class Cfg {
public:
    Cfg() : j_(Json::object()) {}

    explicit Cfg(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        try {
            j_ = Json::parse(buf.str());
        } catch (const Json::parse_error& e) {
            throw ValidationError(path + ": " + e.what());
        }
        if (!j_.is_object()) throw ValidationError(path + ": config must be a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    std::string str(const char* key) const {
        const Json& v = j_.at(key);
        if (!v.is_string()) bad(key, "a string");
        return v.get<std::string>();
    }
    long integer(const char* key) const {
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) bad(key, "an integer");
        return v.get<long>();
    }
    std::uint64_t uint(const char* key) const {
        const Json& v = j_.at(key);
        if (!v.is_number_integer()) bad(key, "an integer");
        return v.get<std::uint64_t>();
    }
    double number(const char* key) const {
        const Json& v = j_.at(key);
        if (!v.is_number()) bad(key, "a number");
        return v.get<double>();
    }
    bool boolean(const char* key) const {
        const Json& v = j_.at(key);
        if (!v.is_boolean()) bad(key, "a boolean");
        return v.get<bool>();
    }
    const Json& raw(const char* key) const { return j_.at(key); }

private:
    [[noreturn]] static void bad(const char* key, const char* what) {
        throw ValidationError(std::string("config key '") + key + "' must be " + what);
    }
    Json j_;
};

std::string eff_str(const CLI::Option* o, const std::string& v, const Cfg& c, const char* key,
                    const std::string& def = "") {
    if (o->count() > 0) return v;
    if (c.has(key)) return c.str(key);
    return def;
}

long eff_int(const CLI::Option* o, long v, const Cfg& c, const char* key, long def) {
    if (o->count() > 0) return v;
    if (c.has(key)) return c.integer(key);
    return def;
}

double eff_num(const CLI::Option* o, double v, const Cfg& c, const char* key, double def) {
    if (o->count() > 0) return v;
    if (c.has(key)) return c.number(key);
    return def;
}

bool eff_flag(const CLI::Option* o, const Cfg& c, const char* key) {
    if (o->count() > 0) return true;
    if (c.has(key)) return c.boolean(key);
    return false;
}

std::optional<std::uint64_t> eff_seed(const CLI::Option* o, std::uint64_t v, const Cfg& c) {
    if (o->count() > 0) return v;
    if (c.has("seed")) return c.uint("seed");
    return std::nullopt;
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed, const char* cmd) {
    if (!seed) {
        throw ValidationError(std::string(cmd) + " draws random numbers and needs an explicit --seed");
    }
    return *seed;
}

char parse_delim(const std::string& s) {
    if (s == "\\t" || s == "tab") return '\t';
    if (s.size() == 1) return s[0];
    throw ValidationError("delimiter must be a single character (or \\t)");
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// ---------------------------------------------------------------------------
// Small JSON and file helpers
// ---------------------------------------------------------------------------

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json matrix_json(const Matrix& m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        a.push_back(std::move(row));
    }
    return a;
}

Matrix json_matrix(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw ValidationError(std::string("config key '") + key +
                              "' must be an array of row arrays");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const Eigen::Index cols =
        j[0].is_array() ? static_cast<Eigen::Index>(j[0].size()) : Eigen::Index(-1);
    Matrix out(rows, std::max<Eigen::Index>(cols, 0));
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError(std::string("config key '") + key +
                                  "' must be a rectangular array of row arrays");
        }
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto& cell = row[static_cast<std::size_t>(k)];
            if (!cell.is_number()) {
                throw ValidationError(std::string("config key '") + key + "' must be numeric");
            }
            out(i, k) = cell.get<double>();
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open file for writing: " + path.string());
    out << text;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create directory: " + dir);
}

// Echo file names carry the subcommand so pipeline stages sharing one run
// directory never clobber each other's configs.
void echo_config(const std::string& out_dir, const Json& ecfg) {
    std::string name = ecfg.at("command").get<std::string>();
    if (ecfg.contains("mode")) name += "_" + ecfg.at("mode").get<std::string>();
    write_text(fs::path(out_dir) / (name + "_config.json"), ecfg.dump(2) + "\n");
}

std::string check_format(const std::string& fmt) {
    const std::string f = lower(fmt);
    if (f != "text" && f != "json") throw ValidationError("--format must be text or json");
    return f;
}

// Reports go to stdout unless an output directory was named.
void deliver(const std::string& out_dir, const char* filename, const std::string& text,
             std::ostream& out) {
    if (out_dir.empty()) {
        out << text;
    } else {
        ensure_dir(out_dir);
        write_text(fs::path(out_dir) / filename, text);
    }
}

int total_parameters(const LmmFit& f) { return f.p() + f.q() * (f.q() + 1) / 2 + 1; }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"multiple imputation for two-level data with missing values"};
    app.name("nestmi");
    app.set_version_flag("--version", std::string("nestmi ") + kVersion);
    app.require_subcommand(1);
    app.footer("Run 'nestmi SUBCOMMAND --help' for the manual of one subcommand.");

    // Options shared across subcommands are declared per subcommand so each
    // --help page is complete on its own.

    // --- patterns -----------------------------------------------------------
    auto* sc_patterns = app.add_subcommand(
        "patterns", "Tabulate the distinct missing-data patterns of a dataset");
    std::string pa_data, pa_group, pa_delim = ",", pa_out, pa_config;
    double pa_min_cum = 1.0;
    auto* pa_data_o = sc_patterns->add_option("--data", pa_data, "Input dataset (delimited text)");
    auto* pa_group_o = sc_patterns->add_option("--group", pa_group, "Name of the cluster column");
    auto* pa_min_o = sc_patterns->add_option(
        "--min-cum", pa_min_cum, "Stop after this cumulative fraction of rows (default 1.0)");
    auto* pa_delim_o = sc_patterns->add_option("--delim", pa_delim, "Field delimiter (default ,)");
    auto* pa_out_o = sc_patterns->add_option("--out", pa_out,
                                             "Output directory (default: print to stdout)");
    sc_patterns->add_option("--config", pa_config, "JSON config; flags override its keys");
    sc_patterns->footer("Examples:\n  nestmi patterns --data d.csv --group ID");

    // --- correlate ----------------------------------------------------------
    auto* sc_correlate = app.add_subcommand(
        "correlate", "Pairwise correlations over jointly observed cases");
    std::string co_data, co_group, co_delim = ",", co_out, co_config;
    auto* co_data_o = sc_correlate->add_option("--data", co_data, "Input dataset");
    auto* co_group_o = sc_correlate->add_option("--group", co_group, "Name of the cluster column");
    auto* co_delim_o = sc_correlate->add_option("--delim", co_delim, "Field delimiter (default ,)");
    auto* co_out_o = sc_correlate->add_option("--out", co_out,
                                              "Output directory (default: print to stdout)");
    sc_correlate->add_option("--config", co_config, "JSON config; flags override its keys");
    sc_correlate->footer("Examples:\n  nestmi correlate --data d.csv --group ID");

    // --- synth ---------------------------------------------------------------
    auto* sc_synth = app.add_subcommand(
        "synth", "Generate a synthetic two-level dataset plus a JSON sidecar of true parameters");
    std::string sy_preset, sy_out, sy_config, sy_delim = ",";
    long sy_groups = 0, sy_per_group = 0;
    std::uint64_t sy_seed = 0;
    auto* sy_preset_o = sc_synth->add_option(
        "--preset", sy_preset, "Named scenario: 'pirls' (clustered achievement study)");
    auto* sy_groups_o = sc_synth->add_option("--groups", sy_groups, "Number of clusters");
    auto* sy_per_o = sc_synth->add_option("--per-group", sy_per_group, "Rows per cluster");
    auto* sy_seed_o = sc_synth->add_option("--seed", sy_seed, "RNG seed (required)");
    auto* sy_delim_o = sc_synth->add_option("--delim", sy_delim, "Field delimiter (default ,)");
    auto* sy_out_o = sc_synth->add_option("--out", sy_out, "Output directory (required)");
    sc_synth->add_option("--config", sy_config,
                         "JSON config holding beta/psi/sigma matrices and an optional ampute block");
    sc_synth->footer(
        "Examples:\n"
        "  nestmi synth --preset pirls --seed 7 --out sim/\n"
        "  nestmi synth --config gen.json --groups 50 --per-group 10 --seed 1 --out sim/\n\n"
        "The config for the second form holds \"beta\", \"psi\", \"sigma\" (arrays of row\n"
        "arrays) and optionally \"ampute\": {\"mechanism\", \"rates\": {var: rate, ...},\n"
        "\"driver\", \"slope\", \"seed\"}. Outputs: data.csv, truth.json, synth_config.json.");

    // --- impute --------------------------------------------------------------
    auto* sc_impute = app.add_subcommand(
        "impute", "Impute missing responses with the multivariate mixed-model Gibbs sampler");
    std::string im_data, im_formula, im_out, im_config, im_delim = ",";
    long im_burnin = 0, im_between = 1, im_m = 1, im_stride = 10;
    std::uint64_t im_seed = 0;
    auto* im_data_o = sc_impute->add_option("--data", im_data, "Input dataset with missing cells");
    auto* im_formula_o = sc_impute->add_option(
        "--formula", im_formula, "Imputation model, e.g. \"y1+y2 ~ 1+x+(1|ID)\"");
    auto* im_burnin_o = sc_impute->add_option("--burnin", im_burnin, "Burn-in scans (default 0)");
    auto* im_between_o = sc_impute->add_option(
        "--between", im_between, "Scans between saved datasets (default 1)");
    auto* im_m_o = sc_impute->add_option("--m", im_m, "Number of datasets to save (default 1)");
    auto* im_seed_o = sc_impute->add_option("--seed", im_seed, "RNG seed (required)");
    auto* im_stride_o = sc_impute->add_option(
        "--trace-stride", im_stride, "Store every Nth scan in the chain store (default 10)");
    auto* im_flat_o = sc_impute->add_flag(
        "--flat", "Ignore the clustering: single-level joint-normal imputation");
    auto* im_long_o = sc_impute->add_flag(
        "--long", "Write one long-format file with a .imp column instead of per-dataset files");
    auto* im_delim_o = sc_impute->add_option("--delim", im_delim, "Field delimiter (default ,)");
    auto* im_out_o = sc_impute->add_option("--out", im_out, "Output directory (required)");
    sc_impute->add_option("--config", im_config, "JSON run config; flags override its keys");
    sc_impute->footer(
        "Examples:\n"
        "  nestmi impute --data d.csv --formula \"MA+SES ~ 1+(1|ID)\" \\\n"
        "      --burnin 50000 --between 5000 --m 100 --seed 42 --out run1/\n\n"
        "Writes imp_001.csv ... (or imputations.csv with --long), chains.csv and\n"
        "impute_config.json into the output directory. The cluster column is the\n"
        "formula's grouping variable. Predictors must be fully observed. A config may\n"
        "add a custom \"prior\" block; rerunning an echoed config reproduces the run\n"
        "byte for byte.");

    // --- diagnose --------------------------------------------------------------
    auto* sc_diagnose = app.add_subcommand(
        "diagnose", "Convergence diagnostics and plot data for a sampler chain store");
    std::string dg_chains, dg_format = "text", dg_param, dg_kind = "trace", dg_out, dg_config,
                dg_delim = ",";
    long dg_segments = 4;
    double dg_threshold = 1.050;
    auto* dg_chains_o = sc_diagnose->add_option("--chains", dg_chains,
                                                "Chain store written by impute (required)");
    auto* dg_segments_o = sc_diagnose->add_option(
        "--segments", dg_segments, "Segments for the scale-reduction estimate (default 4)");
    auto* dg_threshold_o = sc_diagnose->add_option(
        "--threshold", dg_threshold, "Flag parameters above this Rhat (default 1.050)");
    auto* dg_format_o = sc_diagnose->add_option("--format", dg_format,
                                                "Report format: text or json (default text)");
    auto* dg_param_o = sc_diagnose->add_option(
        "--param", dg_param, "Export plot data for one parameter instead of the report");
    auto* dg_kind_o = sc_diagnose->add_option(
        "--kind", dg_kind, "Plot data kind: trace, acf or posterior (default trace)");
    auto* dg_svg_o = sc_diagnose->add_flag("--svg", "Render the plot data as an SVG chart");
    auto* dg_delim_o = sc_diagnose->add_option("--delim", dg_delim, "Field delimiter (default ,)");
    auto* dg_out_o = sc_diagnose->add_option("--out", dg_out,
                                             "Output directory (default: print to stdout)");
    sc_diagnose->add_option("--config", dg_config, "JSON config; flags override its keys");
    sc_diagnose->footer(
        "Examples:\n"
        "  nestmi diagnose --chains run1/chains.csv\n"
        "  nestmi diagnose --chains run1/chains.csv --param \"Beta[1,1]\" --kind acf\n"
        "  nestmi diagnose --chains run1/chains.csv --param \"Psi[1,1]\" --svg --out run1/");

    // --- transform --------------------------------------------------------------
    auto* sc_transform = app.add_subcommand(
        "transform", "Apply group-level transforms to a dataset or to every imputed dataset");
    std::string tr_data, tr_imps, tr_long, tr_group, tr_script, tr_out, tr_config, tr_delim = ",";
    auto* tr_data_o = sc_transform->add_option("--data", tr_data, "Single input dataset");
    auto* tr_imps_o = sc_transform->add_option("--imps", tr_imps,
                                               "Directory of imp_* datasets from impute");
    auto* tr_long_o = sc_transform->add_option("--long", tr_long,
                                               "Long-format imputations file with a .imp column");
    auto* tr_group_o = sc_transform->add_option("--group", tr_group, "Name of the cluster column");
    auto* tr_script_o = sc_transform->add_option(
        "--script", tr_script,
        "Transform script, e.g. \"groupmean(SES -> SES.mean); cwc(SES -> SES.cwc)\"");
    auto* tr_delim_o = sc_transform->add_option("--delim", tr_delim, "Field delimiter (default ,)");
    auto* tr_out_o = sc_transform->add_option("--out", tr_out, "Output directory (required)");
    sc_transform->add_option("--config", tr_config, "JSON config; flags override its keys");
    sc_transform->footer(
        "Examples:\n"
        "  nestmi transform --imps run1/ --group ID \\\n"
        "      --script \"groupmean(SES -> SES.mean); cwc(SES -> SES.cwc)\" --out run1t/\n\n"
        "Exactly one of --data, --imps, --long selects the input; the output keeps\n"
        "the same shape (data.csv, imp_*.csv, or imputations.csv). Group means are\n"
        "recomputed within every imputed dataset.");

    // --- analyze --------------------------------------------------------------
    auto* sc_analyze = app.add_subcommand(
        "analyze", "Fit the analysis model to every imputed dataset and write per-fit JSON");
    std::string an_imps, an_long, an_formula, an_method = "reml", an_out, an_config,
                an_delim = ",";
    long an_jobs = 0;
    auto* an_imps_o = sc_analyze->add_option("--imps", an_imps,
                                             "Directory of imp_* datasets from impute");
    auto* an_long_o = sc_analyze->add_option("--long", an_long,
                                             "Long-format imputations file with a .imp column");
    auto* an_formula_o = sc_analyze->add_option(
        "--formula", an_formula, "Analysis model, e.g. \"y ~ 1+x+(1|ID)\" (one response)");
    auto* an_method_o = sc_analyze->add_option("--method", an_method,
                                               "Estimation: reml or ml (default reml)");
    auto* an_jobs_o = sc_analyze->add_option(
        "--jobs", an_jobs, "Worker threads; 0 means all available cores (default 0)");
    auto* an_delim_o = sc_analyze->add_option("--delim", an_delim, "Field delimiter (default ,)");
    auto* an_out_o = sc_analyze->add_option("--out", an_out, "Output directory (required)");
    sc_analyze->add_option("--config", an_config, "JSON config; flags override its keys");
    sc_analyze->footer(
        "Examples:\n"
        "  nestmi analyze --imps run1/ --formula \"MA ~ 1+SES+(1|ID)\" --method ml --out run1/\n\n"
        "Writes fits/fit_001.json ... into the output directory, one per imputed\n"
        "dataset, in dataset order regardless of --jobs.");

    // --- pool --------------------------------------------------------------
    auto* sc_pool = app.add_subcommand(
        "pool", "Combine per-imputation fits into pooled estimates and tests");
    sc_pool->require_subcommand(1);

    auto* sc_pool_est = sc_pool->add_subcommand(
        "estimates", "Pooled coefficients with SE, df, RIV and FMI, plus variance components");
    std::string pe_fits, pe_format = "text", pe_out, pe_config;
    auto* pe_fits_o = sc_pool_est->add_option("--fits", pe_fits,
                                              "Directory of fit_*.json files from analyze");
    auto* pe_small_o = sc_pool_est->add_flag(
        "--small-sample", "Use the small-sample (complete-data adjusted) degrees of freedom");
    auto* pe_format_o = sc_pool_est->add_option("--format", pe_format,
                                                "Report format: text or json (default text)");
    auto* pe_out_o = sc_pool_est->add_option("--out", pe_out,
                                             "Output directory (default: print to stdout)");
    sc_pool_est->add_option("--config", pe_config, "JSON config; flags override its keys");
    sc_pool_est->footer("Examples:\n  nestmi pool estimates --fits run1/fits/");

    auto* sc_pool_con = sc_pool->add_subcommand(
        "constraints", "Pooled Wald test that the given parameter constraints are zero");
    std::string pc_fits, pc_format = "text", pc_out, pc_config;
    std::vector<std::string> pc_constraints;
    auto* pc_fits_o = sc_pool_con->add_option("--fits", pc_fits,
                                              "Directory of fit_*.json files from analyze");
    auto* pc_constraint_o = sc_pool_con->add_option(
        "--constraint", pc_constraints, "Constraint expression; repeat for a joint test");
    auto* pc_format_o = sc_pool_con->add_option("--format", pc_format,
                                                "Report format: text or json (default text)");
    auto* pc_out_o = sc_pool_con->add_option("--out", pc_out,
                                             "Output directory (default: print to stdout)");
    sc_pool_con->add_option("--config", pc_config, "JSON config; flags override its keys");
    sc_pool_con->footer(
        "Examples:\n"
        "  nestmi pool constraints --fits run1/fits/ --constraint \"x\" --constraint \"x - z\"");

    auto* sc_pool_cmp = sc_pool->add_subcommand(
        "compare", "Pooled comparison of two nested models fitted to the same imputations");
    std::string pm_fits, pm_null_fits, pm_imps, pm_long, pm_formula, pm_null_formula,
        pm_method = "d3", pm_format = "text", pm_out, pm_config, pm_delim = ",";
    auto* pm_fits_o = sc_pool_cmp->add_option("--fits", pm_fits,
                                              "Fit directory of the full model");
    auto* pm_null_fits_o = sc_pool_cmp->add_option("--null-fits", pm_null_fits,
                                                   "Fit directory of the null model");
    auto* pm_imps_o = sc_pool_cmp->add_option(
        "--imps", pm_imps, "Imputed datasets the fits came from (required for d3)");
    auto* pm_long_o = sc_pool_cmp->add_option("--long", pm_long,
                                              "Long-format imputations file (alternative to --imps)");
    auto* pm_formula_o = sc_pool_cmp->add_option("--formula", pm_formula,
                                                 "Full-model formula (required for d3)");
    auto* pm_null_formula_o = sc_pool_cmp->add_option("--null-formula", pm_null_formula,
                                                      "Null-model formula (required for d3)");
    auto* pm_method_o = sc_pool_cmp->add_option(
        "--method", pm_method, "Pooling procedure: d3 (likelihood ratio) or d2 (default d3)");
    auto* pm_format_o = sc_pool_cmp->add_option("--format", pm_format,
                                                "Report format: text or json (default text)");
    auto* pm_delim_o = sc_pool_cmp->add_option("--delim", pm_delim, "Field delimiter (default ,)");
    auto* pm_out_o = sc_pool_cmp->add_option("--out", pm_out,
                                             "Output directory (default: print to stdout)");
    sc_pool_cmp->add_option("--config", pm_config, "JSON config; flags override its keys");
    sc_pool_cmp->footer(
        "Examples:\n"
        "  nestmi pool compare --fits full/fits/ --null-fits null/fits/ \\\n"
        "      --imps run1/ --formula \"MA ~ 1+SES+(1|ID)\" --null-formula \"MA ~ 1+(1|ID)\"\n\n"
        "Both fit sets must use maximum likelihood. d3 re-evaluates the likelihoods\n"
        "at the averaged parameters and needs the datasets; d2 pools the\n"
        "per-imputation likelihood-ratio statistics straight from the fits.");

    // -------------------------------------------------------------------------

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* deepest = &app;
        for (;;) {
            auto parsed = deepest->get_subcommands([](const CLI::App* s) { return s->parsed(); });
            if (parsed.empty()) break;
            deepest = parsed.back();
        }
        out << deepest->help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "nestmi " << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        const CLI::App* deepest = &app;
        for (;;) {
            auto parsed = deepest->get_subcommands([](const CLI::App* s) { return s->parsed(); });
            if (parsed.empty()) break;
            deepest = parsed.back();
        }
        err << "error: " << e.what() << "\n\n" << deepest->help();
        return 1;
    }

    try {
        // --- patterns / correlate -------------------------------------------
        if (*sc_patterns) {
            const Cfg cfg = pa_config.empty() ? Cfg() : Cfg(pa_config);
            const std::string data = eff_str(pa_data_o, pa_data, cfg, "data");
            const std::string group = eff_str(pa_group_o, pa_group, cfg, "group");
            const std::string delim_s = eff_str(pa_delim_o, pa_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(pa_out_o, pa_out, cfg, "out");
            const double min_cum = eff_num(pa_min_o, pa_min_cum, cfg, "min_cum", 1.0);
            if (data.empty()) throw ValidationError("patterns needs --data");
            if (group.empty()) throw ValidationError("patterns needs --group");
            if (!(min_cum > 0.0 && min_cum <= 1.0)) {
                throw ValidationError("--min-cum must lie in (0, 1]");
            }
            const char delim = parse_delim(delim_s);
            const Dataset d = load_dataset_file(data, {group, {}}, delim);
            const PatternTable t = pattern_summary(d, min_cum);
            std::ostringstream text;
            write_pattern_table(t, text, delim);
            deliver(out_dir, "patterns.csv", text.str(), out);
            if (!out_dir.empty()) {
                Json ecfg;
                ecfg["command"] = "patterns";
                ecfg["data"] = data;
                ecfg["group"] = group;
                ecfg["min_cum"] = min_cum;
                ecfg["delim"] = delim_s;
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        if (*sc_correlate) {
            const Cfg cfg = co_config.empty() ? Cfg() : Cfg(co_config);
            const std::string data = eff_str(co_data_o, co_data, cfg, "data");
            const std::string group = eff_str(co_group_o, co_group, cfg, "group");
            const std::string delim_s = eff_str(co_delim_o, co_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(co_out_o, co_out, cfg, "out");
            if (data.empty()) throw ValidationError("correlate needs --data");
            if (group.empty()) throw ValidationError("correlate needs --group");
            const char delim = parse_delim(delim_s);
            const Dataset d = load_dataset_file(data, {group, {}}, delim);
            const CorrelationTable t = pairwise_correlations(d);
            std::ostringstream text;
            write_correlation_table(t, text, delim);
            deliver(out_dir, "correlations.csv", text.str(), out);
            if (!out_dir.empty()) {
                Json ecfg;
                ecfg["command"] = "correlate";
                ecfg["data"] = data;
                ecfg["group"] = group;
                ecfg["delim"] = delim_s;
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        // --- synth ------------------------------------------------------------
        if (*sc_synth) {
            const Cfg cfg = sy_config.empty() ? Cfg() : Cfg(sy_config);
            const std::string preset = eff_str(sy_preset_o, sy_preset, cfg, "preset");
            const std::string out_dir = eff_str(sy_out_o, sy_out, cfg, "out");
            const std::string delim_s = eff_str(sy_delim_o, sy_delim, cfg, "delim", ",");
            const std::uint64_t seed = require_seed(eff_seed(sy_seed_o, sy_seed, cfg), "synth");
            if (out_dir.empty()) throw ValidationError("synth needs --out");
            const char delim = parse_delim(delim_s);
            ensure_dir(out_dir);

            Json truth;
            Json ecfg;
            ecfg["command"] = "synth";
            Dataset d = [&]() -> Dataset {
                if (!preset.empty()) {
                    if (preset != "pirls") throw ValidationError("unknown preset '" + preset + "'");
                    const PirlsDesign des = pirls_design();
                    truth["preset"] = "pirls";
                    truth["seed"] = seed;
                    truth["variables"] = des.variables;
                    truth["group"] = "class";
                    truth["classes"] = Json::array({217, 258});
                    truth["class_sizes"] = Json::array({19, 18});
                    truth["correlation"] = matrix_json(des.correlation);
                    truth["icc"] = vector_json(des.icc);
                    truth["missing_rates"] = vector_json(des.missing_rates);
                    truth["unit_rate"] = des.unit_rate;
                    truth["ses_rate"] = des.ses_rate;
                    truth["planned_dpm_rate"] = des.planned_dpm_rate;
                    truth["mar_slope"] = des.mar_slope;
                    ecfg["preset"] = "pirls";
                    ecfg["seed"] = seed;
                    return pirls_like(seed);
                }
                for (const char* key : {"beta", "psi", "sigma"}) {
                    if (!cfg.has(key)) {
                        throw ValidationError(
                            std::string("synth without --preset needs config key '") + key + "'");
                    }
                }
                const Matrix beta = json_matrix(cfg.raw("beta"), "beta");
                const Matrix psi = json_matrix(cfg.raw("psi"), "psi");
                const Matrix sigma = json_matrix(cfg.raw("sigma"), "sigma");
                const long groups = eff_int(sy_groups_o, sy_groups, cfg, "groups", 0);
                const long per_group = eff_int(sy_per_o, sy_per_group, cfg, "per_group", 0);
                if (groups < 1 || per_group < 1) {
                    throw ValidationError("synth needs --groups and --per-group (or config keys)");
                }
                truth["seed"] = seed;
                truth["groups"] = groups;
                truth["per_group"] = per_group;
                truth["beta"] = matrix_json(beta);
                truth["psi"] = matrix_json(psi);
                truth["sigma"] = matrix_json(sigma);
                ecfg["groups"] = groups;
                ecfg["per_group"] = per_group;
                ecfg["seed"] = seed;
                ecfg["beta"] = truth["beta"];
                ecfg["psi"] = truth["psi"];
                ecfg["sigma"] = truth["sigma"];
                Dataset gen = generate_two_level(static_cast<int>(groups),
                                                 static_cast<int>(per_group), beta, psi, sigma,
                                                 seed);
                if (cfg.has("ampute")) {
                    const Json& a = cfg.raw("ampute");
                    if (!a.is_object()) throw ValidationError("config key 'ampute' must be an object");
                    AmputeSpec spec;
                    const std::string mech = a.contains("mechanism")
                                                 ? a.at("mechanism").get<std::string>()
                                                 : "MCAR";
                    if (mech == "MCAR") {
                        spec.mechanism = Mechanism::MCAR;
                    } else if (mech == "MAR") {
                        spec.mechanism = Mechanism::MAR;
                    } else {
                        throw ValidationError("ampute mechanism must be MCAR or MAR");
                    }
                    if (!a.contains("rates") || !a.at("rates").is_object()) {
                        throw ValidationError("ampute block needs a 'rates' object");
                    }
                    for (const auto& [var, rate] : a.at("rates").items()) {
                        if (!rate.is_number()) {
                            throw ValidationError("ampute rates must be numeric");
                        }
                        spec.rates.emplace_back(var, rate.get<double>());
                    }
                    if (a.contains("driver")) spec.mar_driver = a.at("driver").get<std::string>();
                    if (a.contains("slope")) spec.mar_slope = a.at("slope").get<double>();
                    spec.seed = a.contains("seed") ? a.at("seed").get<std::uint64_t>() : seed + 1;
                    gen = ampute(gen, spec);
                    Json atruth;
                    atruth["mechanism"] = mech;
                    atruth["rates"] = a.at("rates");
                    if (!spec.mar_driver.empty()) atruth["driver"] = spec.mar_driver;
                    atruth["slope"] = spec.mar_slope;
                    atruth["seed"] = spec.seed;
                    truth["ampute"] = atruth;
                    ecfg["ampute"] = atruth;
                }
                return gen;
            }();
            ecfg["delim"] = delim_s;
            ecfg["out"] = out_dir;
            write_dataset_file(d, (fs::path(out_dir) / "data.csv").string(), delim);
            write_text(fs::path(out_dir) / "truth.json", truth.dump(2) + "\n");
            echo_config(out_dir, ecfg);
            err << "synth: " << d.n_rows() << " rows in " << d.n_groups() << " groups -> "
                << out_dir << "\n";
            return 0;
        }

        // --- impute -----------------------------------------------------------
        if (*sc_impute) {
            const Cfg cfg = im_config.empty() ? Cfg() : Cfg(im_config);
            const std::string data = eff_str(im_data_o, im_data, cfg, "data");
            const std::string out_dir = eff_str(im_out_o, im_out, cfg, "out");
            const std::string delim_s = eff_str(im_delim_o, im_delim, cfg, "delim", ",");
            const std::uint64_t seed = require_seed(eff_seed(im_seed_o, im_seed, cfg), "impute");
            const bool long_form = eff_flag(im_long_o, cfg, "long");
            if (data.empty()) throw ValidationError("impute needs --data");
            if (out_dir.empty()) throw ValidationError("impute needs --out");
            const char delim = parse_delim(delim_s);

            Json ecfg;
            ecfg["command"] = "impute";
            ecfg["data"] = data;
            ecfg["formula"] = eff_str(im_formula_o, im_formula, cfg, "formula");
            ecfg["burnin"] = eff_int(im_burnin_o, im_burnin, cfg, "burnin", 0);
            ecfg["between"] = eff_int(im_between_o, im_between, cfg, "between", 1);
            ecfg["m"] = eff_int(im_m_o, im_m, cfg, "m", 1);
            ecfg["seed"] = seed;
            ecfg["trace_stride"] = eff_int(im_stride_o, im_stride, cfg, "trace_stride", 10);
            ecfg["flat"] = eff_flag(im_flat_o, cfg, "flat");
            ecfg["long"] = long_form;
            if (cfg.has("prior")) ecfg["prior"] = cfg.raw("prior");
            ecfg["delim"] = delim_s;
            ecfg["out"] = out_dir;
            if (ecfg["formula"].get<std::string>().empty()) {
                throw ValidationError("impute needs --formula");
            }

            const ImputationSpec spec = spec_from_json(ecfg.dump());
            const std::string group = parse_formula(spec.formula).random.group;
            const Dataset d = load_dataset_file(data, {group, {}}, delim);
            const ImputationResult res = run_imputation(spec, d);

            ensure_dir(out_dir);
            if (long_form) {
                write_imputations_long_file(res.datasets,
                                            (fs::path(out_dir) / "imputations.csv").string(),
                                            delim);
            } else {
                write_imputations_dir(res.datasets, out_dir, delim);
            }
            write_chain_store_file(res.chains, (fs::path(out_dir) / "chains.csv").string(), delim);
            echo_config(out_dir, ecfg);
            err << "impute: m=" << res.datasets.size() << " datasets, " << res.total_iterations
                << " scans in " << res.wall_seconds << " s -> " << out_dir << "\n";
            return 0;
        }

        // --- diagnose -----------------------------------------------------------
        if (*sc_diagnose) {
            const Cfg cfg = dg_config.empty() ? Cfg() : Cfg(dg_config);
            const std::string chains = eff_str(dg_chains_o, dg_chains, cfg, "chains");
            const std::string delim_s = eff_str(dg_delim_o, dg_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(dg_out_o, dg_out, cfg, "out");
            const std::string param = eff_str(dg_param_o, dg_param, cfg, "param");
            const std::string kind_s = lower(eff_str(dg_kind_o, dg_kind, cfg, "kind", "trace"));
            const std::string format = check_format(eff_str(dg_format_o, dg_format, cfg, "format",
                                                            "text"));
            const long segments = eff_int(dg_segments_o, dg_segments, cfg, "segments", 4);
            const double threshold = eff_num(dg_threshold_o, dg_threshold, cfg, "threshold", 1.050);
            const bool svg = eff_flag(dg_svg_o, cfg, "svg");
            if (chains.empty()) throw ValidationError("diagnose needs --chains");
            if (param.empty() && (dg_kind_o->count() > 0 || svg)) {
                throw ValidationError("--kind and --svg require --param");
            }
            const char delim = parse_delim(delim_s);
            const ChainStore store = read_chain_store_file(chains, delim);

            Json ecfg;
            ecfg["command"] = "diagnose";
            ecfg["chains"] = chains;

            if (param.empty()) {
                const ConvergenceReport rep =
                    convergence_report(store, static_cast<int>(segments), threshold);
                std::string text;
                if (format == "json") {
                    text = convergence_to_json(rep);
                } else {
                    std::ostringstream buf;
                    write_convergence_report(rep, buf);
                    text = buf.str();
                }
                deliver(out_dir, format == "json" ? "convergence.json" : "convergence.txt", text,
                        out);
                ecfg["segments"] = segments;
                ecfg["threshold"] = threshold;
                ecfg["format"] = format;
            } else {
                PlotKind kind;
                if (kind_s == "trace") {
                    kind = PlotKind::trace;
                } else if (kind_s == "acf") {
                    kind = PlotKind::acf;
                } else if (kind_s == "posterior") {
                    kind = PlotKind::posterior;
                } else {
                    throw ValidationError("--kind must be trace, acf or posterior");
                }
                std::string text;
                if (svg) {
                    text = plot_svg(store, param, kind);
                } else {
                    std::ostringstream buf;
                    export_plot_data(store, param, kind, buf, delim);
                    text = buf.str();
                }
                deliver(out_dir, svg ? "plot.svg" : "plot.csv", text, out);
                ecfg["param"] = param;
                ecfg["kind"] = kind_s;
                ecfg["svg"] = svg;
            }
            ecfg["delim"] = delim_s;
            if (!out_dir.empty()) {
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        // --- transform -----------------------------------------------------------
        if (*sc_transform) {
            const Cfg cfg = tr_config.empty() ? Cfg() : Cfg(tr_config);
            const std::string data = eff_str(tr_data_o, tr_data, cfg, "data");
            const std::string imps_dir = eff_str(tr_imps_o, tr_imps, cfg, "imps");
            const std::string long_file = eff_str(tr_long_o, tr_long, cfg, "long");
            const std::string group = eff_str(tr_group_o, tr_group, cfg, "group");
            const std::string script_text = eff_str(tr_script_o, tr_script, cfg, "script");
            const std::string delim_s = eff_str(tr_delim_o, tr_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(tr_out_o, tr_out, cfg, "out");
            const int inputs = (!data.empty()) + (!imps_dir.empty()) + (!long_file.empty());
            if (inputs != 1) {
                throw ValidationError(
                    "transform needs exactly one input: --data, --imps or --long");
            }
            if (group.empty()) throw ValidationError("transform needs --group");
            if (script_text.empty()) throw ValidationError("transform needs --script");
            if (out_dir.empty()) throw ValidationError("transform needs --out");
            const char delim = parse_delim(delim_s);

            const std::vector<TransformStep> script = parse_transform_script(script_text);
            std::vector<Dataset> imps;
            if (!data.empty()) {
                imps.push_back(load_dataset_file(data, {group, {}}, delim));
            } else if (!imps_dir.empty()) {
                imps = read_imputations_dir(imps_dir, {group, {}}, delim);
            } else {
                imps = read_imputations_long_file(long_file, {group, {}}, delim);
            }
            const std::vector<Dataset> done = apply_to_all(imps, script);

            ensure_dir(out_dir);
            if (!data.empty()) {
                write_dataset_file(done[0], (fs::path(out_dir) / "data.csv").string(), delim);
            } else if (!imps_dir.empty()) {
                write_imputations_dir(done, out_dir, delim);
            } else {
                write_imputations_long_file(done,
                                            (fs::path(out_dir) / "imputations.csv").string(),
                                            delim);
            }
            Json ecfg;
            ecfg["command"] = "transform";
            if (!data.empty()) ecfg["data"] = data;
            if (!imps_dir.empty()) ecfg["imps"] = imps_dir;
            if (!long_file.empty()) ecfg["long"] = long_file;
            ecfg["group"] = group;
            ecfg["script"] = transform_script_text(script);
            ecfg["delim"] = delim_s;
            ecfg["out"] = out_dir;
            echo_config(out_dir, ecfg);
            return 0;
        }

        // --- analyze -----------------------------------------------------------
        if (*sc_analyze) {
            const Cfg cfg = an_config.empty() ? Cfg() : Cfg(an_config);
            const std::string imps_dir = eff_str(an_imps_o, an_imps, cfg, "imps");
            const std::string long_file = eff_str(an_long_o, an_long, cfg, "long");
            const std::string formula_text = eff_str(an_formula_o, an_formula, cfg, "formula");
            const std::string method_s = lower(eff_str(an_method_o, an_method, cfg, "method",
                                                       "reml"));
            const std::string delim_s = eff_str(an_delim_o, an_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(an_out_o, an_out, cfg, "out");
            const long jobs_requested = eff_int(an_jobs_o, an_jobs, cfg, "jobs", 0);
            if ((imps_dir.empty()) == (long_file.empty())) {
                throw ValidationError("analyze needs exactly one input: --imps or --long");
            }
            if (formula_text.empty()) throw ValidationError("analyze needs --formula");
            if (out_dir.empty()) throw ValidationError("analyze needs --out");
            if (jobs_requested < 0) throw ValidationError("--jobs must be nonnegative");
            const char delim = parse_delim(delim_s);

            AnalysisModel model;
            model.formula = parse_formula(formula_text);
            if (method_s == "ml") {
                model.method = EstMethod::ML;
            } else if (method_s == "reml") {
                model.method = EstMethod::REML;
            } else {
                throw ValidationError("--method must be reml or ml");
            }
            const std::string group = model.formula.random.group;
            const std::vector<Dataset> imps =
                imps_dir.empty() ? read_imputations_long_file(long_file, {group, {}}, delim)
                                 : read_imputations_dir(imps_dir, {group, {}}, delim);

            const int n = static_cast<int>(imps.size());
            int jobs = static_cast<int>(jobs_requested);
            if (jobs == 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
            jobs = std::max(1, std::min(jobs, n));

            std::vector<LmmFit> fits(static_cast<std::size_t>(n));
            std::atomic<int> next{0};
            std::mutex mu;
            std::exception_ptr first_error;
            auto worker = [&]() {
                for (;;) {
                    const int i = next.fetch_add(1);
                    if (i >= n) return;
                    try {
                        fits[static_cast<std::size_t>(i)] =
                            fit_lmm(model, imps[static_cast<std::size_t>(i)]);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(mu);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            };
            if (jobs == 1) {
                worker();
            } else {
                std::vector<std::thread> pool;
                pool.reserve(static_cast<std::size_t>(jobs));
                for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
                for (auto& t : pool) t.join();
            }
            if (first_error) std::rethrow_exception(first_error);

            const fs::path fits_dir = fs::path(out_dir) / "fits";
            ensure_dir(fits_dir.string());
            for (int i = 0; i < n; ++i) {
                char name[32];
                std::snprintf(name, sizeof name, "fit_%03u.json", static_cast<unsigned>(i + 1));
                write_fit_file(fits[static_cast<std::size_t>(i)], (fits_dir / name).string());
            }
            Json ecfg;
            ecfg["command"] = "analyze";
            if (!imps_dir.empty()) ecfg["imps"] = imps_dir;
            if (!long_file.empty()) ecfg["long"] = long_file;
            ecfg["formula"] = formula_text;
            ecfg["method"] = method_s;
            ecfg["jobs"] = jobs_requested;
            ecfg["delim"] = delim_s;
            ecfg["out"] = out_dir;
            echo_config(out_dir, ecfg);
            err << "analyze: " << n << " fits (" << jobs << " worker"
                << (jobs == 1 ? "" : "s") << ") -> " << fits_dir.string() << "\n";
            return 0;
        }

        // --- pool -----------------------------------------------------------
        if (*sc_pool_est) {
            const Cfg cfg = pe_config.empty() ? Cfg() : Cfg(pe_config);
            const std::string fits_dir = eff_str(pe_fits_o, pe_fits, cfg, "fits");
            const std::string format = check_format(eff_str(pe_format_o, pe_format, cfg, "format",
                                                            "text"));
            const std::string out_dir = eff_str(pe_out_o, pe_out, cfg, "out");
            const bool small = eff_flag(pe_small_o, cfg, "small_sample");
            if (fits_dir.empty()) throw ValidationError("pool estimates needs --fits");
            const std::vector<LmmFit> fits = read_fits_dir(fits_dir);
            const PooledEstimates pooled = pool_estimates(fits, small);
            std::string text;
            if (format == "json") {
                text = pooled_estimates_to_json(pooled);
            } else {
                std::ostringstream buf;
                write_pooled_estimates(pooled, buf);
                text = buf.str();
            }
            deliver(out_dir, format == "json" ? "pooled_estimates.json" : "pooled_estimates.txt",
                    text, out);
            if (!out_dir.empty()) {
                Json ecfg;
                ecfg["command"] = "pool";
                ecfg["mode"] = "estimates";
                ecfg["fits"] = fits_dir;
                ecfg["small_sample"] = small;
                ecfg["format"] = format;
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        if (*sc_pool_con) {
            const Cfg cfg = pc_config.empty() ? Cfg() : Cfg(pc_config);
            const std::string fits_dir = eff_str(pc_fits_o, pc_fits, cfg, "fits");
            const std::string format = check_format(eff_str(pc_format_o, pc_format, cfg, "format",
                                                            "text"));
            const std::string out_dir = eff_str(pc_out_o, pc_out, cfg, "out");
            std::vector<std::string> constraints = pc_constraints;
            if (pc_constraint_o->count() == 0 && cfg.has("constraints")) {
                constraints.clear();
                for (const auto& c : cfg.raw("constraints")) {
                    if (!c.is_string()) {
                        throw ValidationError("config key 'constraints' must be an array of strings");
                    }
                    constraints.push_back(c.get<std::string>());
                }
            }
            if (fits_dir.empty()) throw ValidationError("pool constraints needs --fits");
            const std::vector<LmmFit> fits = read_fits_dir(fits_dir);
            const DTestResult res = pool_constraints(fits, constraints);
            std::string text;
            if (format == "json") {
                text = dtest_to_json(res);
            } else {
                std::ostringstream buf;
                write_dtest(res, buf);
                text = buf.str();
            }
            deliver(out_dir, format == "json" ? "test.json" : "test.txt", text, out);
            if (!out_dir.empty()) {
                Json ecfg;
                ecfg["command"] = "pool";
                ecfg["mode"] = "constraints";
                ecfg["fits"] = fits_dir;
                ecfg["constraints"] = constraints;
                ecfg["format"] = format;
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        if (*sc_pool_cmp) {
            const Cfg cfg = pm_config.empty() ? Cfg() : Cfg(pm_config);
            const std::string fits_dir = eff_str(pm_fits_o, pm_fits, cfg, "fits");
            const std::string null_fits_dir = eff_str(pm_null_fits_o, pm_null_fits, cfg,
                                                      "null_fits");
            const std::string imps_dir = eff_str(pm_imps_o, pm_imps, cfg, "imps");
            const std::string long_file = eff_str(pm_long_o, pm_long, cfg, "long");
            const std::string formula_full = eff_str(pm_formula_o, pm_formula, cfg, "formula");
            const std::string formula_null = eff_str(pm_null_formula_o, pm_null_formula, cfg,
                                                     "null_formula");
            const std::string method = lower(eff_str(pm_method_o, pm_method, cfg, "method", "d3"));
            const std::string format = check_format(eff_str(pm_format_o, pm_format, cfg, "format",
                                                            "text"));
            const std::string delim_s = eff_str(pm_delim_o, pm_delim, cfg, "delim", ",");
            const std::string out_dir = eff_str(pm_out_o, pm_out, cfg, "out");
            if (fits_dir.empty() || null_fits_dir.empty()) {
                throw ValidationError("pool compare needs --fits and --null-fits");
            }
            if (method != "d3" && method != "d2") {
                throw ValidationError("--method must be d3 or d2");
            }
            const std::vector<LmmFit> fits_full = read_fits_dir(fits_dir);
            const std::vector<LmmFit> fits_null = read_fits_dir(null_fits_dir);

            DTestResult res;
            if (method == "d3") {
                if ((imps_dir.empty()) == (long_file.empty())) {
                    throw ValidationError(
                        "pool compare with d3 needs exactly one of --imps or --long");
                }
                if (formula_full.empty() || formula_null.empty()) {
                    throw ValidationError(
                        "pool compare with d3 needs --formula and --null-formula");
                }
                const char delim = parse_delim(delim_s);
                AnalysisModel model_full{parse_formula(formula_full), EstMethod::ML};
                AnalysisModel model_null{parse_formula(formula_null), EstMethod::ML};
                const std::string group = model_full.formula.random.group;
                const std::vector<Dataset> imps =
                    imps_dir.empty() ? read_imputations_long_file(long_file, {group, {}}, delim)
                                     : read_imputations_dir(imps_dir, {group, {}}, delim);
                res = pool_lrt_d3(fits_full, fits_null, model_full, model_null, imps);
            } else {
                if (fits_full.size() != fits_null.size()) {
                    throw ValidationError("the two fit lists must have matching lengths");
                }
                for (const auto& fits : {&fits_full, &fits_null}) {
                    for (const LmmFit& f : *fits) {
                        if (f.method != EstMethod::ML) {
                            throw ValidationError(
                                "likelihood-ratio pooling requires maximum likelihood fits");
                        }
                    }
                }
                const int k = total_parameters(fits_full[0]) - total_parameters(fits_null[0]);
                if (k < 0) {
                    throw ValidationError("the null model has more parameters than the full model");
                }
                std::vector<double> stats;
                stats.reserve(fits_full.size());
                for (std::size_t l = 0; l < fits_full.size(); ++l) {
                    stats.push_back(
                        std::max(0.0, 2.0 * (fits_full[l].loglik - fits_null[l].loglik)));
                }
                res = pool_chisq_d2(stats, k);
            }
            std::string text;
            if (format == "json") {
                text = dtest_to_json(res);
            } else {
                std::ostringstream buf;
                write_dtest(res, buf);
                text = buf.str();
            }
            deliver(out_dir, format == "json" ? "test.json" : "test.txt", text, out);
            if (!out_dir.empty()) {
                Json ecfg;
                ecfg["command"] = "pool";
                ecfg["mode"] = "compare";
                ecfg["fits"] = fits_dir;
                ecfg["null_fits"] = null_fits_dir;
                if (!imps_dir.empty()) ecfg["imps"] = imps_dir;
                if (!long_file.empty()) ecfg["long"] = long_file;
                if (!formula_full.empty()) ecfg["formula"] = formula_full;
                if (!formula_null.empty()) ecfg["null_formula"] = formula_null;
                ecfg["method"] = method;
                ecfg["format"] = format;
                ecfg["delim"] = delim_s;
                ecfg["out"] = out_dir;
                echo_config(out_dir, ecfg);
            }
            return 0;
        }

        throw ValidationError("no subcommand given");
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace nestmi
