#include "nestmi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nestmi/error.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

// ===========================================================================
// Dataset
// ===========================================================================

Dataset::Dataset(std::vector<std::string> var_names,
                 std::vector<Vector> columns,
                 std::string group_name,
                 const std::vector<std::string>& group_labels,
                 int group_pos)
    : var_names_(std::move(var_names)),
      columns_(std::move(columns)),
      group_name_(std::move(group_name)) {
    if (var_names_.size() != columns_.size()) {
        throw ValidationError("column name count does not match column count");
    }
    if (group_labels.empty()) throw ValidationError("dataset has no rows");
    n_rows_ = static_cast<int>(group_labels.size());
    for (const auto& c : columns_) {
        if (c.size() != n_rows_) throw ValidationError("columns differ in length");
    }
    if (group_name_.empty()) throw ValidationError("group column name is empty");
    std::unordered_set<std::string> seen{group_name_};
    for (const auto& n : var_names_) {
        if (n.empty()) throw ValidationError("empty column name");
        if (!seen.insert(n).second) throw ValidationError("duplicate column name: " + n);
    }
    group_codes_.reserve(group_labels.size());
    std::unordered_map<std::string, int> code_of;
    for (const auto& label : group_labels) {
        if (label.empty()) throw ValidationError("missing value in group column " + group_name_);
        auto [it, inserted] = code_of.try_emplace(label, static_cast<int>(group_label_set_.size()));
        if (inserted) group_label_set_.push_back(label);
        group_codes_.push_back(it->second);
    }
    group_pos_ = std::clamp(group_pos, 0, static_cast<int>(var_names_.size()));
}

bool Dataset::has_var(const std::string& name) const {
    return std::find(var_names_.begin(), var_names_.end(), name) != var_names_.end();
}

int Dataset::var_index(const std::string& name) const {
    auto it = std::find(var_names_.begin(), var_names_.end(), name);
    if (it == var_names_.end()) throw ValidationError("unknown variable: " + name);
    return static_cast<int>(it - var_names_.begin());
}

void Dataset::add_column(const std::string& name, Vector values) {
    if (values.size() != n_rows_) throw ValidationError("new column length mismatch: " + name);
    if (name.empty() || name == group_name_ || has_var(name)) {
        throw ValidationError("invalid or duplicate column name: " + name);
    }
    var_names_.push_back(name);
    columns_.push_back(std::move(values));
}

MissingMask missing_mask(const Dataset& d) {
    MissingMask m;
    m.var_names = d.var_names();
    m.missing.resize(d.n_rows(), d.n_vars());
    for (int v = 0; v < d.n_vars(); ++v) {
        for (int i = 0; i < d.n_rows(); ++i) m.missing(i, v) = d.is_missing(i, v);
    }
    return m;
}

// ===========================================================================
// Summaries
// ===========================================================================

PatternTable pattern_summary(const Dataset& d, double min_cum_pct) {
    const int n = d.n_rows();
    const int nv = d.n_vars();
    std::map<std::string, long> counts;  // key: 'o'/'x' per variable
    std::string key(static_cast<size_t>(nv), 'o');
    for (int i = 0; i < n; ++i) {
        for (int v = 0; v < nv; ++v) key[static_cast<size_t>(v)] = d.is_missing(i, v) ? 'x' : 'o';
        ++counts[key];
    }
    std::vector<std::pair<std::string, long>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    PatternTable t;
    t.var_names = d.var_names();
    t.n_total = n;
    long cum = 0;
    for (const auto& [pat, count] : order) {
        cum += count;
        PatternRow row;
        row.observed.reserve(pat.size());
        for (char c : pat) row.observed.push_back(c == 'o');
        row.count = count;
        row.rel_pct = static_cast<double>(count) / n;
        row.cum_pct = static_cast<double>(cum) / n;
        t.rows.push_back(std::move(row));
        if (t.rows.back().cum_pct >= min_cum_pct) break;
    }
    return t;
}

CorrelationTable pairwise_correlations(const Dataset& d) {
    const int nv = d.n_vars();
    if (nv < 2) throw ValidationError("pairwise correlations need at least 2 variables");
    const int n = d.n_rows();

    CorrelationTable t;
    t.var_names = d.var_names();
    t.r = Matrix::Constant(nv, nv, std::numeric_limits<double>::quiet_NaN());
    t.defined.setConstant(nv, nv, false);
    t.missing_pct.resize(static_cast<size_t>(nv));
    for (int v = 0; v < nv; ++v) {
        long miss = 0;
        for (int i = 0; i < n; ++i) miss += d.is_missing(i, v) ? 1 : 0;
        t.missing_pct[static_cast<size_t>(v)] = static_cast<double>(miss) / n;
    }

    for (int u = 0; u < nv; ++u) {
        for (int v = u; v < nv; ++v) {
            long cnt = 0;
            double mx = 0.0, my = 0.0;
            for (int i = 0; i < n; ++i) {
                if (d.is_missing(i, u) || d.is_missing(i, v)) continue;
                ++cnt;
                mx += d.column(u)(i);
                my += d.column(v)(i);
            }
            if (cnt < 2) continue;
            mx /= cnt;
            my /= cnt;
            double sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int i = 0; i < n; ++i) {
                if (d.is_missing(i, u) || d.is_missing(i, v)) continue;
                const double dx = d.column(u)(i) - mx;
                const double dy = d.column(v)(i) - my;
                sxx += dx * dx;
                syy += dy * dy;
                sxy += dx * dy;
            }
            if (sxx <= 0.0 || syy <= 0.0) continue;
            double r = (u == v) ? 1.0 : sxy / std::sqrt(sxx * syy);
            r = std::clamp(r, -1.0, 1.0);
            t.r(u, v) = t.r(v, u) = r;
            t.defined(u, v) = t.defined(v, u) = true;
        }
    }
    return t;
}

GroupIndex group_index(const Dataset& d) {
    GroupIndex g;
    g.J = d.n_groups();
    g.labels = d.group_label_set();
    g.rows.resize(static_cast<size_t>(g.J));
    g.sizes.assign(static_cast<size_t>(g.J), 0);
    for (int i = 0; i < d.n_rows(); ++i) {
        const int j = d.group_code(i);
        g.rows[static_cast<size_t>(j)].push_back(i);
        ++g.sizes[static_cast<size_t>(j)];
    }
    return g;
}

// ===========================================================================
// Delimited-text I/O
// ===========================================================================

namespace {

struct Cell {
    std::string_view text;
    size_t offset;  // byte offset in the stream
};

std::vector<Cell> split_cells(std::string_view line, size_t line_offset, char delim) {
    std::vector<Cell> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            out.push_back({line.substr(start, i - start), line_offset + start});
            start = i + 1;
        }
    }
    return out;
}

bool is_missing_token(std::string_view t) { return t.empty() || t == "NA"; }

}  // namespace

Dataset load_dataset(std::istream& in, const DatasetSchema& schema, char delim) {
    std::string content(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    if (schema.group_col.empty()) throw ValidationError("schema must name a group column");

    // Line boundaries with byte offsets; a trailing newline adds no record.
    std::vector<std::pair<std::string_view, size_t>> lines;
    {
        std::string_view rest(content);
        size_t off = 0;
        while (!rest.empty()) {
            size_t nl = rest.find('\n');
            std::string_view line = (nl == std::string_view::npos) ? rest : rest.substr(0, nl);
            lines.emplace_back(line, off);
            if (nl == std::string_view::npos) break;
            off += nl + 1;
            rest.remove_prefix(nl + 1);
        }
    }
    while (!lines.empty() && trim(lines.back().first).empty()) lines.pop_back();
    if (lines.empty()) throw ValidationError("empty input: header row required");

    auto header = split_cells(lines[0].first, lines[0].second, delim);
    std::vector<std::string> names;
    names.reserve(header.size());
    for (const auto& c : header) {
        std::string name(trim(c.text));
        if (name.empty()) throw ParseError("empty column name in header", c.offset);
        names.push_back(std::move(name));
    }
    if (!schema.columns.empty() && names != schema.columns) {
        throw ValidationError("header does not match expected columns");
    }
    int group_pos = -1;
    for (size_t k = 0; k < names.size(); ++k) {
        if (names[k] == schema.group_col) group_pos = static_cast<int>(k);
    }
    if (group_pos < 0) throw ValidationError("group column not found: " + schema.group_col);

    const size_t ncol = names.size();
    const size_t nrec = lines.size() - 1;
    std::vector<std::vector<double>> cols(ncol - 1);
    for (auto& c : cols) c.reserve(nrec);
    std::vector<std::string> group_labels;
    group_labels.reserve(nrec);

    for (size_t rec = 0; rec < nrec; ++rec) {
        const auto& [line, line_off] = lines[rec + 1];
        auto cells = split_cells(line, line_off, delim);
        if (cells.size() != ncol) {
            throw ParseError("row " + std::to_string(rec + 1) + " has " +
                                 std::to_string(cells.size()) + " fields, expected " +
                                 std::to_string(ncol),
                             line_off);
        }
        size_t vi = 0;
        for (size_t k = 0; k < ncol; ++k) {
            std::string_view tok = trim(cells[k].text);
            if (static_cast<int>(k) == group_pos) {
                if (is_missing_token(tok)) {
                    throw ValidationError("missing group value in row " + std::to_string(rec + 1));
                }
                group_labels.emplace_back(tok);
                continue;
            }
            if (is_missing_token(tok)) {
                cols[vi++].push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            auto v = parse_double(tok);
            if (!v) {
                throw ParseError("malformed numeric cell '" + std::string(tok) + "' at row " +
                                     std::to_string(rec + 1) + ", column " + names[k],
                                 cells[k].offset);
            }
            cols[vi++].push_back(*v);
        }
    }

    std::vector<std::string> var_names;
    var_names.reserve(ncol - 1);
    for (size_t k = 0; k < ncol; ++k) {
        if (static_cast<int>(k) != group_pos) var_names.push_back(names[k]);
    }
    std::vector<Vector> columns;
    columns.reserve(cols.size());
    for (auto& c : cols) {
        columns.push_back(Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size())));
    }
    return Dataset(std::move(var_names), std::move(columns), names[static_cast<size_t>(group_pos)],
                   group_labels, group_pos);
}

Dataset load_dataset_file(const std::string& path, const DatasetSchema& schema, char delim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    return load_dataset(in, schema, delim);
}

void write_dataset(const Dataset& d, std::ostream& out, char delim) {
    const int nv = d.n_vars();
    const int gp = std::min(d.group_pos(), nv);
    // File order: variables with the group column spliced back in at gp.
    auto var_at = [&](int file_col) { return file_col < gp ? file_col : file_col - 1; };
    for (int k = 0; k <= nv; ++k) {
        if (k) out << delim;
        out << (k == gp ? d.group_name() : d.var_names()[static_cast<size_t>(var_at(k))]);
    }
    out << '\n';
    for (int i = 0; i < d.n_rows(); ++i) {
        for (int k = 0; k <= nv; ++k) {
            if (k) out << delim;
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

void write_dataset_file(const Dataset& d, const std::string& path, char delim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open file for writing: " + path);
    write_dataset(d, out, delim);
}

void write_pattern_table(const PatternTable& t, std::ostream& out, char delim, int pct_decimals) {
    out << "pattern";
    for (const auto& n : t.var_names) out << delim << n;
    out << delim << "cases" << delim << "rel_pct" << delim << "cum_pct" << '\n';
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        out << (i + 1);
        for (bool obs : row.observed) out << delim << (obs ? 'o' : 'x');
        out << delim << row.count;
        out << delim << format_fixed(100.0 * row.rel_pct, pct_decimals);
        out << delim << format_fixed(100.0 * row.cum_pct, pct_decimals);
        out << '\n';
    }
}

void write_correlation_table(const CorrelationTable& t, std::ostream& out, char delim,
                             int r_decimals, int pct_decimals) {
    const int nv = static_cast<int>(t.var_names.size());
    out << "variable";
    for (const auto& n : t.var_names) out << delim << n;
    out << '\n';
    for (int u = 0; u < nv; ++u) {
        out << t.var_names[static_cast<size_t>(u)];
        for (int v = 0; v < nv; ++v) {
            out << delim;
            if (v <= u) continue;  // upper triangle only
            if (!t.defined(u, v)) {
                out << "undefined";
            } else {
                out << format_fixed(t.r(u, v), r_decimals);
            }
        }
        out << '\n';
    }
    out << "missing_pct";
    for (int v = 0; v < nv; ++v) {
        out << delim << format_fixed(100.0 * t.missing_pct[static_cast<size_t>(v)], pct_decimals);
    }
    out << '\n';
}

}  // namespace nestmi
