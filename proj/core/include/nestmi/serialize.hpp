#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nestmi/dataset.hpp"
#include "nestmi/diagnostics.hpp"
#include "nestmi/gibbs.hpp"
#include "nestmi/lmm.hpp"
#include "nestmi/pooling.hpp"

namespace nestmi {

// ===========================================================================
// JSON and long-format interchange
// ===========================================================================
//
// Every JSON writer emits a two-space-indented object with keys in a fixed
// order and doubles in shortest round-trip form, so identical inputs give
// byte-identical files. Readers ignore unknown keys; malformed JSON raises
// ParseError with the byte offset, structural violations ValidationError.
// Non-finite doubles have no JSON literal and are written as null; readers
// map null back to NaN (the only non-finite value stored in practice).

// Fit object: coef_names, beta, vcov, random_names, G, sigma2, loglik,
// deviance, method ("ML"/"REML"), df_com, n_obs, n_groups, converged,
// boundary, n_evals. Matrices are arrays of row arrays.
std::string fit_to_json(const LmmFit& f);
LmmFit fit_from_json(const std::string& text);
void write_fit_file(const LmmFit& f, const std::string& path);
LmmFit read_fit_file(const std::string& path);

// Every *.json file in `dir`, ordered by name (shorter names first, so
// zero-padded sequences sort numerically). Throws ValidationError when the
// directory cannot be read or contains no fit files.
std::vector<LmmFit> read_fits_dir(const std::string& dir);

// Run-config object: formula, burnin, between, m, seed, trace_stride, flat,
// and optionally prior {nu_sigma, lambda_sigma, nu_psi, lambda_psi}. The
// keys match the CLI flags, so a full CLI config file parses as a spec;
// anything beyond the spec's fields is ignored. `formula` is required.
std::string spec_to_json(const ImputationSpec& s);
ImputationSpec spec_from_json(const std::string& text);
void write_spec_file(const ImputationSpec& s, const std::string& path);
ImputationSpec read_spec_file(const std::string& path);

// Report objects for machine consumption. Infinite df still serialize as
// null; consumers treat a null df as infinity.
std::string pooled_estimates_to_json(const PooledEstimates& e);
std::string dtest_to_json(const DTestResult& t);
std::string convergence_to_json(const ConvergenceReport& r);

// Long-format bridge: the m completed datasets stacked into one delimited
// file with a leading 1-based `.imp` index column, cells formatted exactly
// as write_dataset formats them. All datasets must share one column layout.
// The reader accepts `.imp` at any position but requires the indices to
// cover 1..m contiguously; rows keep their file order within each index.
void write_imputations_long(const std::vector<Dataset>& imps, std::ostream& out,
                            char delim = ',');
void write_imputations_long_file(const std::vector<Dataset>& imps, const std::string& path,
                                 char delim = ',');
std::vector<Dataset> read_imputations_long(std::istream& in, const DatasetSchema& schema,
                                           char delim = ',');
std::vector<Dataset> read_imputations_long_file(const std::string& path,
                                                const DatasetSchema& schema, char delim = ',');

// Per-imputation files `imp_001.csv` ... under `dir`; the reader loads every
// `imp_*` file ordered by name (shorter first). Throws ValidationError when
// none are found.
void write_imputations_dir(const std::vector<Dataset>& imps, const std::string& dir,
                           char delim = ',');
std::vector<Dataset> read_imputations_dir(const std::string& dir, const DatasetSchema& schema,
                                          char delim = ',');

}  // namespace nestmi
