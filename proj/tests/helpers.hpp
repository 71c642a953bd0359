#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "nestmi/dataset.hpp"

namespace testutil {

// Bitwise equality with NaN treated as equal to NaN (any payload).
inline bool same_value(double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

inline bool same_dataset(const nestmi::Dataset& a, const nestmi::Dataset& b) {
    if (a.n_rows() != b.n_rows() || a.n_vars() != b.n_vars()) return false;
    if (a.var_names() != b.var_names()) return false;
    if (a.group_name() != b.group_name()) return false;
    if (a.group_label_set() != b.group_label_set()) return false;
    for (int i = 0; i < a.n_rows(); ++i) {
        if (a.group_code(i) != b.group_code(i)) return false;
        for (int v = 0; v < a.n_vars(); ++v) {
            if (!same_value(a.column(v)(i), b.column(v)(i))) return false;
        }
    }
    return true;
}

inline nestmi::Dataset load_from_string(const std::string& text, const std::string& group_col,
                                        char delim = ',') {
    std::istringstream in(text);
    return nestmi::load_dataset(in, nestmi::DatasetSchema{group_col, {}}, delim);
}

inline std::string write_to_string(const nestmi::Dataset& d, char delim = ',') {
    std::ostringstream out;
    nestmi::write_dataset(d, out, delim);
    return out.str();
}

}  // namespace testutil
