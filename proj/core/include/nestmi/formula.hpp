#pragma once

#include <string>
#include <vector>

#include "nestmi/dataset.hpp"

namespace nestmi {

// ===========================================================================
// Model-formula mini-language
// ===========================================================================
//
// Grammar:
//   formula  := lhs "~" rhs
//   lhs      := name ("+" name)*
//   rhs      := term ("+" term)*
//   term     := "1" | name | "(" "1" ("+" name)* "|" name ")"
//
// The intercept appears only when "1" is written explicitly. Exactly one
// random block is required and its variables must also appear as fixed terms.

struct RandomBlock {
    std::vector<std::string> vars;  // beyond the mandatory intercept
    std::string group;
};

struct ModelFormula {
    std::vector<std::string> responses;
    bool fixed_intercept = false;
    std::vector<std::string> fixed_vars;
    RandomBlock random;

    int n_responses() const { return static_cast<int>(responses.size()); }
    int n_fixed() const { return (fixed_intercept ? 1 : 0) + static_cast<int>(fixed_vars.size()); }
    int n_random() const { return 1 + static_cast<int>(random.vars.size()); }

    // Round-trip stable: parse_formula(canonical()) == *this.
    std::string canonical() const;
};

// Throws ParseError with the byte offset of the offending token.
ModelFormula parse_formula(const std::string& text);

struct DesignMatrices {
    Matrix Y;  // N x r, NaN at missing cells
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> y_missing;
    Matrix X;  // N x p, complete
    Matrix Z;  // N x q, complete
    GroupIndex groups;
    std::vector<std::string> y_names, x_names, z_names;

    int n_rows() const { return static_cast<int>(Y.rows()); }
    int r() const { return static_cast<int>(Y.cols()); }
    int p() const { return static_cast<int>(X.cols()); }
    int q() const { return static_cast<int>(Z.cols()); }
};

// The formula's grouping variable must be the dataset's group column, and all
// predictor columns must be fully observed; violations raise ValidationError
// naming the offending column.
DesignMatrices build_design(const ModelFormula& f, const Dataset& d);

}  // namespace nestmi
