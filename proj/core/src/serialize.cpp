#include "nestmi/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nestmi/error.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

namespace {

using Json = nlohmann::ordered_json;

Json parse_json(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        throw ParseError(e.what(), offset);
    }
}

const Json& need(const Json& j, const char* key, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ValidationError(std::string(what) + " is missing '" + key + "'");
    }
    return *it;
}

double as_double(const Json& j, const char* key) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw ValidationError(std::string("'") + key + "' must be a number");
    return j.get<double>();
}

long as_long(const Json& j, const char* key) {
    if (!j.is_number_integer()) {
        throw ValidationError(std::string("'") + key + "' must be an integer");
    }
    return j.get<long>();
}

bool as_bool(const Json& j, const char* key) {
    if (!j.is_boolean()) throw ValidationError(std::string("'") + key + "' must be a boolean");
    return j.get<bool>();
}

std::vector<std::string> as_names(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw ValidationError(std::string("'") + key + "' must be an array of strings");
    }
    std::vector<std::string> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_string()) {
            throw ValidationError(std::string("'") + key + "' must be an array of strings");
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

Vector as_vector(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw ValidationError(std::string("'") + key + "' must be an array of numbers");
    }
    Vector out(static_cast<Eigen::Index>(j.size()));
    Eigen::Index i = 0;
    for (const auto& e : j) out(i++) = as_double(e, key);
    return out;
}

Matrix as_matrix(const Json& j, const char* key) {
    if (!j.is_array()) {
        throw ValidationError(std::string("'") + key + "' must be an array of row arrays");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    if (!j[0].is_array()) {
        throw ValidationError(std::string("'") + key + "' must be an array of row arrays");
    }
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ValidationError(std::string("'") + key + "' rows have unequal lengths");
        }
        for (Eigen::Index k = 0; k < cols; ++k) {
            out(i, k) = as_double(row[static_cast<std::size_t>(k)], key);
        }
    }
    return out;
}

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

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spill(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    out << text;
}

// Zero-padded sequences sort numerically under (length, name); a longer name
// is a longer number.
bool name_less(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

std::vector<std::filesystem::path> list_files(const std::string& dir, const char* what,
                                              bool (*keep)(const std::filesystem::path&)) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::directory_iterator it(dir, ec);
    if (ec) throw ValidationError("cannot read directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : it) {
        if (entry.is_regular_file() && keep(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return name_less(a.filename().string(), b.filename().string());
    });
    if (files.empty()) throw ValidationError(std::string("no ") + what + " files in: " + dir);
    return files;
}

}  // namespace

std::string fit_to_json(const LmmFit& f) {
    Json j;
    j["coef_names"] = f.coef_names;
    j["beta"] = vector_json(f.beta);
    j["vcov"] = matrix_json(f.vcov);
    j["random_names"] = f.random_names;
    j["G"] = matrix_json(f.G);
    j["sigma2"] = f.sigma2;
    j["loglik"] = f.loglik;
    j["deviance"] = f.deviance;
    j["method"] = f.method == EstMethod::ML ? "ML" : "REML";
    j["df_com"] = f.df_com;
    j["n_obs"] = f.n_obs;
    j["n_groups"] = f.n_groups;
    j["converged"] = f.converged;
    j["boundary"] = f.boundary;
    j["n_evals"] = f.n_evals;
    return dump(j);
}

LmmFit fit_from_json(const std::string& text) {
    const Json j = parse_json(text);
    if (!j.is_object()) throw ValidationError("fit object must be a JSON object");
    LmmFit f;
    f.coef_names = as_names(need(j, "coef_names", "fit object"), "coef_names");
    f.beta = as_vector(need(j, "beta", "fit object"), "beta");
    f.vcov = as_matrix(need(j, "vcov", "fit object"), "vcov");
    f.random_names = as_names(need(j, "random_names", "fit object"), "random_names");
    f.G = as_matrix(need(j, "G", "fit object"), "G");
    f.sigma2 = as_double(need(j, "sigma2", "fit object"), "sigma2");
    f.loglik = as_double(need(j, "loglik", "fit object"), "loglik");
    f.deviance = as_double(need(j, "deviance", "fit object"), "deviance");
    const Json& method = need(j, "method", "fit object");
    if (!method.is_string()) throw ValidationError("'method' must be \"ML\" or \"REML\"");
    const std::string m = method.get<std::string>();
    if (m == "ML") {
        f.method = EstMethod::ML;
    } else if (m == "REML") {
        f.method = EstMethod::REML;
    } else {
        throw ValidationError("unknown estimation method '" + m + "'");
    }
    f.df_com = as_double(need(j, "df_com", "fit object"), "df_com");
    f.n_obs = static_cast<int>(as_long(need(j, "n_obs", "fit object"), "n_obs"));
    f.n_groups = static_cast<int>(as_long(need(j, "n_groups", "fit object"), "n_groups"));
    f.converged = as_bool(need(j, "converged", "fit object"), "converged");
    f.boundary = as_bool(need(j, "boundary", "fit object"), "boundary");
    f.n_evals = static_cast<int>(as_long(need(j, "n_evals", "fit object"), "n_evals"));

    if (static_cast<int>(f.coef_names.size()) != f.p()) {
        throw ValidationError("'coef_names' and 'beta' have different lengths");
    }
    if (f.vcov.rows() != f.p() || f.vcov.cols() != f.p()) {
        throw ValidationError("'vcov' must be square with one row per coefficient");
    }
    if (f.G.rows() != f.G.cols()) throw ValidationError("'G' must be square");
    if (static_cast<int>(f.random_names.size()) != f.q()) {
        throw ValidationError("'random_names' and 'G' have different sizes");
    }
    return f;
}

void write_fit_file(const LmmFit& f, const std::string& path) { spill(path, fit_to_json(f)); }

LmmFit read_fit_file(const std::string& path) { return fit_from_json(slurp(path)); }

std::vector<LmmFit> read_fits_dir(const std::string& dir) {
    auto files = list_files(dir, ".json fit",
                            [](const std::filesystem::path& p) { return p.extension() == ".json"; });
    std::vector<LmmFit> fits;
    fits.reserve(files.size());
    for (const auto& p : files) {
        try {
            fits.push_back(read_fit_file(p.string()));
        } catch (const ParseError& e) {
            throw ValidationError(p.filename().string() + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(p.filename().string() + ": " + e.what());
        }
    }
    return fits;
}

std::string spec_to_json(const ImputationSpec& s) {
    Json j;
    j["formula"] = s.formula;
    j["burnin"] = s.n_burn;
    j["between"] = s.n_between;
    j["m"] = s.m;
    j["seed"] = s.seed;
    j["trace_stride"] = s.trace_stride;
    j["flat"] = s.flat;
    if (s.prior) {
        Json p;
        p["nu_sigma"] = s.prior->nu_sigma;
        p["lambda_sigma"] = matrix_json(s.prior->lambda_sigma);
        p["nu_psi"] = s.prior->nu_psi;
        p["lambda_psi"] = matrix_json(s.prior->lambda_psi);
        j["prior"] = std::move(p);
    }
    return dump(j);
}

ImputationSpec spec_from_json(const std::string& text) {
    const Json j = parse_json(text);
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    ImputationSpec s;
    const Json& formula = need(j, "formula", "run config");
    if (!formula.is_string()) throw ValidationError("'formula' must be a string");
    s.formula = formula.get<std::string>();
    if (auto it = j.find("burnin"); it != j.end()) s.n_burn = as_long(*it, "burnin");
    if (auto it = j.find("between"); it != j.end()) s.n_between = as_long(*it, "between");
    if (auto it = j.find("m"); it != j.end()) s.m = static_cast<int>(as_long(*it, "m"));
    if (auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_integer()) throw ValidationError("'seed' must be an integer");
        s.seed = it->get<std::uint64_t>();
    }
    if (auto it = j.find("trace_stride"); it != j.end()) {
        s.trace_stride = static_cast<int>(as_long(*it, "trace_stride"));
    }
    if (auto it = j.find("flat"); it != j.end()) s.flat = as_bool(*it, "flat");
    if (auto it = j.find("prior"); it != j.end() && !it->is_null()) {
        const Json& p = *it;
        if (!p.is_object()) throw ValidationError("'prior' must be an object");
        Prior prior;
        prior.nu_sigma = as_double(need(p, "nu_sigma", "prior"), "nu_sigma");
        prior.lambda_sigma = as_matrix(need(p, "lambda_sigma", "prior"), "lambda_sigma");
        prior.nu_psi = as_double(need(p, "nu_psi", "prior"), "nu_psi");
        prior.lambda_psi = as_matrix(need(p, "lambda_psi", "prior"), "lambda_psi");
        s.prior = std::move(prior);
    }
    return s;
}

void write_spec_file(const ImputationSpec& s, const std::string& path) {
    spill(path, spec_to_json(s));
}

ImputationSpec read_spec_file(const std::string& path) { return spec_from_json(slurp(path)); }

std::string pooled_estimates_to_json(const PooledEstimates& e) {
    Json j;
    j["m"] = e.m;
    j["df_com"] = e.df_com;
    j["small_sample"] = e.small_sample;
    Json params = Json::array();
    for (std::size_t i = 0; i < e.names.size(); ++i) {
        const PoolSummary& s = e.params[i];
        Json p;
        p["name"] = e.names[i];
        p["estimate"] = s.estimate;
        p["se"] = s.se;
        p["t"] = s.tstat;
        p["df"] = s.nu;
        p["p"] = s.p;
        p["riv"] = s.riv;
        p["fmi"] = s.fmi;
        p["ubar"] = s.ubar;
        p["between"] = s.between;
        p["total"] = s.total;
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    Json comps = Json::array();
    for (std::size_t i = 0; i < e.component_names.size(); ++i) {
        Json c;
        c["name"] = e.component_names[i];
        c["estimate"] = e.components[i];
        comps.push_back(std::move(c));
    }
    j["components"] = std::move(comps);
    return dump(j);
}

std::string dtest_to_json(const DTestResult& t) {
    Json j;
    j["procedure"] = t.procedure;
    j["F"] = t.F;
    j["df1"] = t.df1;
    j["df2"] = t.df2;
    j["p"] = t.p;
    j["riv"] = t.r;
    j["notes"] = t.notes;
    return dump(j);
}

std::string convergence_to_json(const ConvergenceReport& r) {
    Json j;
    j["n_segments"] = r.n_segments;
    j["threshold"] = r.threshold;
    Json summary;
    summary["min"] = r.min;
    summary["q25"] = r.q25;
    summary["mean"] = r.mean;
    summary["q75"] = r.q75;
    summary["max"] = r.max;
    j["summary"] = std::move(summary);
    Json worst;
    worst["name"] = r.worst_name;
    worst["rhat"] = r.worst_rhat;
    j["worst"] = std::move(worst);
    j["flagged"] = r.flagged;
    Json params = Json::array();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        Json p;
        p["name"] = r.names[i];
        p["rhat"] = r.rhat[i];
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    return dump(j);
}

namespace {

void check_same_layout(const std::vector<Dataset>& imps) {
    if (imps.empty()) throw ValidationError("no datasets to write");
    const Dataset& first = imps.front();
    for (const Dataset& d : imps) {
        if (d.var_names() != first.var_names() || d.group_name() != first.group_name() ||
            d.group_pos() != first.group_pos()) {
            throw ValidationError("datasets do not share one column layout");
        }
    }
}

}  // namespace

void write_imputations_long(const std::vector<Dataset>& imps, std::ostream& out, char delim) {
    check_same_layout(imps);
    const Dataset& first = imps.front();
    const int nv = first.n_vars();
    const int gp = std::min(first.group_pos(), nv);
    auto var_at = [&](int file_col) { return file_col < gp ? file_col : file_col - 1; };
    out << ".imp";
    for (int k = 0; k <= nv; ++k) {
        out << delim
            << (k == gp ? first.group_name() : first.var_names()[static_cast<size_t>(var_at(k))]);
    }
    out << '\n';
    for (std::size_t idx = 0; idx < imps.size(); ++idx) {
        const Dataset& d = imps[idx];
        for (int i = 0; i < d.n_rows(); ++i) {
            out << (idx + 1);
            for (int k = 0; k <= nv; ++k) {
                out << delim;
                if (k == gp) {
                    out << d.group_label_set()[static_cast<size_t>(d.group_code(i))];
                } else {
                    const int v = var_at(k);
                    out << (d.is_missing(i, v) ? "NA" : format_double(d.column(v)(i)));
                }
            }
            out << '\n';
        }
    }
}

void write_imputations_long_file(const std::vector<Dataset>& imps, const std::string& path,
                                 char delim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    write_imputations_long(imps, out, delim);
}

std::vector<Dataset> read_imputations_long(std::istream& in, const DatasetSchema& schema,
                                           char delim) {
    DatasetSchema long_schema;
    long_schema.group_col = schema.group_col;
    const Dataset all = load_dataset(in, long_schema, delim);
    if (!all.has_var(".imp")) {
        throw ValidationError("long format requires a '.imp' index column");
    }
    const int imp_var = all.var_index(".imp");
    const Vector& idx = all.column(imp_var);

    int m = 0;
    for (int i = 0; i < all.n_rows(); ++i) {
        const double v = idx(i);
        if (std::isnan(v) || v < 1 || v != std::floor(v)) {
            throw ValidationError("invalid imputation index at row " + std::to_string(i + 1));
        }
        m = std::max(m, static_cast<int>(v));
    }
    if (all.n_rows() == 0) throw ValidationError("long format file has no data rows");
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(m));
    for (int i = 0; i < all.n_rows(); ++i) {
        rows[static_cast<std::size_t>(idx(i)) - 1].push_back(i);
    }
    for (int k = 0; k < m; ++k) {
        if (rows[static_cast<std::size_t>(k)].empty()) {
            throw ValidationError("imputation index " + std::to_string(k + 1) + " has no rows");
        }
    }

    // Column layout of one completed dataset: the long file minus `.imp`.
    const int gp_long = all.group_pos();
    const int imp_file_pos = imp_var < gp_long ? imp_var : imp_var + 1;
    const int gp_inner = imp_file_pos < gp_long ? gp_long - 1 : gp_long;
    std::vector<std::string> inner_names;
    std::vector<int> inner_vars;  // indices into `all`'s numeric columns
    for (int v = 0; v < all.n_vars(); ++v) {
        if (v == imp_var) continue;
        inner_names.push_back(all.var_names()[static_cast<size_t>(v)]);
        inner_vars.push_back(v);
    }
    if (!schema.columns.empty()) {
        std::vector<std::string> file_order;
        for (int k = 0, v = 0; k <= static_cast<int>(inner_names.size()); ++k) {
            if (k == gp_inner) {
                file_order.push_back(all.group_name());
            } else {
                file_order.push_back(inner_names[static_cast<size_t>(v++)]);
            }
        }
        if (file_order != schema.columns) {
            throw ValidationError("header does not match expected columns");
        }
    }

    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        const auto& take = rows[static_cast<std::size_t>(k)];
        const Eigen::Index n = static_cast<Eigen::Index>(take.size());
        std::vector<Vector> cols;
        cols.reserve(inner_vars.size());
        for (int v : inner_vars) {
            Vector c(n);
            for (Eigen::Index i = 0; i < n; ++i) c(i) = all.column(v)(take[static_cast<size_t>(i)]);
            cols.push_back(std::move(c));
        }
        std::vector<std::string> labels;
        labels.reserve(take.size());
        for (int row : take) {
            labels.push_back(all.group_label_set()[static_cast<size_t>(all.group_code(row))]);
        }
        out.emplace_back(inner_names, std::move(cols), all.group_name(), labels, gp_inner);
    }
    return out;
}

std::vector<Dataset> read_imputations_long_file(const std::string& path,
                                                const DatasetSchema& schema, char delim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    return read_imputations_long(in, schema, delim);
}

void write_imputations_dir(const std::vector<Dataset>& imps, const std::string& dir, char delim) {
    check_same_layout(imps);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create directory: " + dir);
    for (std::size_t i = 0; i < imps.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "imp_%03u.csv", static_cast<unsigned>(i + 1));
        write_dataset_file(imps[i], (std::filesystem::path(dir) / name).string(), delim);
    }
}

std::vector<Dataset> read_imputations_dir(const std::string& dir, const DatasetSchema& schema,
                                          char delim) {
    auto files = list_files(dir, "imp_* dataset", [](const std::filesystem::path& p) {
        return p.filename().string().rfind("imp_", 0) == 0;
    });
    std::vector<Dataset> out;
    out.reserve(files.size());
    for (const auto& p : files) {
        try {
            out.push_back(load_dataset_file(p.string(), schema, delim));
        } catch (const ParseError& e) {
            throw ValidationError(p.filename().string() + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(p.filename().string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace nestmi
