#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nestmi/dataset.hpp"

namespace nestmi {

// ===========================================================================
// Synthetic two-level data
// ===========================================================================

// Balanced draws from the generating model
//
//   y_ij = beta' x_ij + b_j' z_ij + e_ij,
//   vec(b_j) ~ Normal(0, psi),  e_ij ~ Normal(0, sigma),
//
// with r = sigma.rows() responses, beta p x r (intercept row first), psi the
// (q*r) x (q*r) covariance of the column-stacked random effects, and z_ij the
// first q entries of x_ij. Covariates x2..xp are drawn standard normal.
//
// Columns: y1..yr, then x1..x{p-1}; group column "g" with labels g1..gJ.
// psi and sigma must be symmetric positive semidefinite (zero is allowed and
// gives degenerate draws); the stream of draws is fixed by the seed.
Dataset generate_two_level(int n_groups, int n_per_group, const Matrix& beta, const Matrix& psi,
                           const Matrix& sigma, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Amputation
// ---------------------------------------------------------------------------

enum class Mechanism { MCAR, MAR };

// MCAR punches independent Bernoulli(rate) holes per cell. MAR makes the
// missingness probability logistic(alpha + slope * z) in the standardized
// driver, with alpha calibrated by bisection so the expected rate matches the
// target (well inside 0.5% absolute). Cells are visited variable-major in the
// listed order, so results are fixed by the seed.
struct AmputeSpec {
    Mechanism mechanism = Mechanism::MCAR;
    std::vector<std::pair<std::string, double>> rates;  // variable -> rate in [0,1)
    std::string mar_driver;                             // fully observed column (MAR only)
    double mar_slope = 1.0;  // logistic slope on the standardized driver
    std::uint64_t seed = 0;
};

// The group column is never touched; the driver may not itself be amputed.
Dataset ampute(const Dataset& d, const AmputeSpec& spec);

// ---------------------------------------------------------------------------
// Survey-like demo dataset
// ---------------------------------------------------------------------------

// Population design behind pirls_like: seven standardized achievement and
// climate scores whose total correlation matrix and per-variable intraclass
// correlations are fixed targets. The between/within split scales a common
// matrix C with C_uv = R_uv / (sqrt(icc_u icc_v) + sqrt((1-icc_u)(1-icc_v))),
// so between + within reproduces R exactly with unit total variances.
struct PirlsDesign {
    std::vector<std::string> variables;  // MA RA CA SES DPM DPR SC
    Matrix correlation;                  // population total correlation
    Vector icc;                          // per-variable intraclass correlation
    Matrix between, within;              // derived covariance split
    Vector missing_rates;                // overall target rate per variable
    double unit_rate = 0.194;       // joint MA/DPM/DPR/SC nonresponse, MAR on RA
    double ses_rate = 0.35;         // SES nonresponse, MAR on RA
    double planned_dpm_rate = 0.5;  // planned MCAR on DPM
    double mar_slope = 0.5;
};

PirlsDesign pirls_design();

// 8,767 students in 475 classes (217 of size 19, 258 of size 18) drawn from
// pirls_design(), then amputed: a unit-nonresponse block on MA/DPM/DPR/SC and
// an SES block, both MAR on reading achievement; a 50% planned MCAR wave on
// DPM; and small MCAR item rates on DPM/DPR/SC sized so the overall rates hit
// the design targets. RA and CA stay complete.
Dataset pirls_like(std::uint64_t seed);

}  // namespace nestmi
