#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "nestmi/rng.hpp"

namespace nestmi {

// ===========================================================================
// Two-level rectangular dataset
// ===========================================================================
//
// Numeric analysis variables are stored column-wise; missing cells carry NaN
// internally and are written as "NA". The cluster identifier is kept apart
// from the numeric columns: original labels plus dense codes 0..J-1 assigned
// in first-appearance order, so design matrices are deterministic regardless
// of how groups are labeled in the file.

class Dataset {
public:
    // `group_labels` has one entry per row and must contain no empty labels.
    // `group_pos` is the group column's position in the on-disk column order.
    Dataset(std::vector<std::string> var_names,
            std::vector<Vector> columns,
            std::string group_name,
            const std::vector<std::string>& group_labels,
            int group_pos = 0);

    int n_rows() const { return n_rows_; }
    int n_vars() const { return static_cast<int>(columns_.size()); }

    const std::vector<std::string>& var_names() const { return var_names_; }
    bool has_var(const std::string& name) const;
    int var_index(const std::string& name) const;  // throws ValidationError

    const Vector& column(int v) const { return columns_[static_cast<size_t>(v)]; }
    const Vector& column(const std::string& name) const { return column(var_index(name)); }
    bool is_missing(int row, int v) const { return std::isnan(columns_[static_cast<size_t>(v)](row)); }

    void set_value(int row, int v, double value) { columns_[static_cast<size_t>(v)](row) = value; }
    void add_column(const std::string& name, Vector values);  // appended after existing vars

    const std::string& group_name() const { return group_name_; }
    int group_code(int row) const { return group_codes_[static_cast<size_t>(row)]; }
    const std::vector<int>& group_codes() const { return group_codes_; }
    int n_groups() const { return static_cast<int>(group_label_set_.size()); }
    const std::vector<std::string>& group_label_set() const { return group_label_set_; }
    int group_pos() const { return group_pos_; }

private:
    int n_rows_;
    std::vector<std::string> var_names_;
    std::vector<Vector> columns_;
    std::string group_name_;
    std::vector<int> group_codes_;              // per row, 0..J-1
    std::vector<std::string> group_label_set_;  // label per code
    int group_pos_;
};

struct MissingMask {
    std::vector<std::string> var_names;  // group column excluded
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> missing;  // N x V
};

MissingMask missing_mask(const Dataset& d);

// ===========================================================================
// Summaries
// ===========================================================================

struct PatternRow {
    std::vector<bool> observed;  // per variable, true = observed
    long count = 0;
    double rel_pct = 0.0;  // fraction of N
    double cum_pct = 0.0;  // running fraction, nondecreasing
};

struct PatternTable {
    std::vector<std::string> var_names;
    std::vector<PatternRow> rows;
    long n_total = 0;
};

// Distinct row-wise missingness patterns sorted by count descending (ties by
// pattern string, observed before missing). Rows are emitted until the
// cumulative fraction first reaches `min_cum_pct`; pass 1.0 for all patterns.
PatternTable pattern_summary(const Dataset& d, double min_cum_pct);

struct CorrelationTable {
    std::vector<std::string> var_names;
    Matrix r;  // symmetric; meaningful only where `defined`
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> defined;
    std::vector<double> missing_pct;  // fraction per variable
};

// Pearson correlations over jointly observed rows (pairwise deletion). Pairs
// with fewer than two complete cases or zero variance are flagged undefined.
CorrelationTable pairwise_correlations(const Dataset& d);

struct GroupIndex {
    int J = 0;
    std::vector<std::vector<int>> rows;  // ascending row ids per group
    std::vector<int> sizes;
    std::vector<std::string> labels;
};

GroupIndex group_index(const Dataset& d);

// ===========================================================================
// Delimited-text I/O
// ===========================================================================

struct DatasetSchema {
    std::string group_col;
    // When nonempty, the header must consist of exactly these names (order
    // included); otherwise the header is taken as-is.
    std::vector<std::string> columns;
};

// Expects a header row; cells "NA" or empty parse as missing. Malformed or
// non-finite numeric cells raise ParseError carrying the cell's byte offset.
Dataset load_dataset(std::istream& in, const DatasetSchema& schema, char delim = ',');
Dataset load_dataset_file(const std::string& path, const DatasetSchema& schema, char delim = ',');

// Columns appear in original file order with the group column restored to its
// position. Numeric cells use shortest round-trip formatting; missing cells
// are written as "NA".
void write_dataset(const Dataset& d, std::ostream& out, char delim = ',');
void write_dataset_file(const Dataset& d, const std::string& path, char delim = ',');

// Presentation tables mirroring the descriptive-summary layouts: patterns as
// (index, o/x flags, cases, rel %, cum %); correlations as an upper-triangle
// square with a trailing per-variable missing-percentage row.
void write_pattern_table(const PatternTable& t, std::ostream& out, char delim = ',',
                         int pct_decimals = 1);
void write_correlation_table(const CorrelationTable& t, std::ostream& out, char delim = ',',
                             int r_decimals = 3, int pct_decimals = 1);

}  // namespace nestmi
