#include "nestmi/transforms.hpp"

#include <cctype>
#include <cmath>
#include <limits>

#include "nestmi/error.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

namespace {

// Observed-case mean of `var` per group code; NaN where a group has no
// observed values.
Vector per_group_means(const Dataset& d, int var) {
    const int J = d.n_groups();
    Vector sum = Vector::Zero(J);
    std::vector<long> cnt(static_cast<size_t>(J), 0);
    for (int i = 0; i < d.n_rows(); ++i) {
        if (d.is_missing(i, var)) continue;
        sum(d.group_code(i)) += d.column(var)(i);
        ++cnt[static_cast<size_t>(d.group_code(i))];
    }
    Vector mean(J);
    for (int j = 0; j < J; ++j) {
        mean(j) = cnt[static_cast<size_t>(j)] ? sum(j) / cnt[static_cast<size_t>(j)]
                                              : std::numeric_limits<double>::quiet_NaN();
    }
    return mean;
}

void check_args(const Dataset& d, const std::string& var, const std::string& group,
                const std::string& out) {
    if (group != d.group_name()) {
        throw ValidationError("transform group '" + group + "' is not the dataset group column '" +
                              d.group_name() + "'");
    }
    d.var_index(var);  // throws if absent
    if (out.empty() || out == d.group_name() || d.has_var(out)) {
        throw ValidationError("transform output collides with existing column: " + out);
    }
}

}  // namespace

Dataset group_means(const Dataset& d, const std::string& var, const std::string& group,
                    const std::string& out) {
    check_args(d, var, group, out);
    const Vector mean = per_group_means(d, d.var_index(var));
    Vector col(d.n_rows());
    for (int i = 0; i < d.n_rows(); ++i) col(i) = mean(d.group_code(i));
    Dataset res = d;
    res.add_column(out, std::move(col));
    return res;
}

Dataset center_within_group(const Dataset& d, const std::string& var, const std::string& group,
                            const std::string& out) {
    check_args(d, var, group, out);
    const int v = d.var_index(var);
    const Vector mean = per_group_means(d, v);
    Vector col(d.n_rows());
    for (int i = 0; i < d.n_rows(); ++i) {
        col(i) = d.is_missing(i, v) ? std::numeric_limits<double>::quiet_NaN()
                                    : d.column(v)(i) - mean(d.group_code(i));
    }
    Dataset res = d;
    res.add_column(out, std::move(col));
    return res;
}

// ---------------------------------------------------------------------------
// Script parsing
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
    std::string_view s;
    size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool done() {
        skip_ws();
        return pos >= s.size();
    }
    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c, const char* what) {
        if (!eat(c)) throw ParseError(std::string("expected '") + c + "' " + what, pos);
    }
    std::string ident(const char* what) {
        skip_ws();
        const size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) ||
                                  s[pos] == '.' || s[pos] == '_')) {
            ++pos;
        }
        if (pos == start || !std::isalpha(static_cast<unsigned char>(s[start]))) {
            throw ParseError(std::string("expected ") + what, start);
        }
        return std::string(s.substr(start, pos - start));
    }
};

}  // namespace

std::vector<TransformStep> parse_transform_script(std::string_view text) {
    Cursor c{text};
    std::vector<TransformStep> steps;
    while (!c.done()) {
        c.skip_ws();
        const size_t op_off = c.pos;
        const std::string op = c.ident("transform name");
        TransformStep step;
        if (op == "groupmean") {
            step.op = TransformOp::GroupMean;
        } else if (op == "cwc") {
            step.op = TransformOp::CenterWithinGroup;
        } else {
            throw ParseError("unknown transform '" + op + "' (expected groupmean or cwc)", op_off);
        }
        c.expect('(', "after transform name");
        step.var = c.ident("variable name");
        c.expect('-', "in '->'");
        c.expect('>', "in '->'");
        step.out = c.ident("output name");
        c.expect(')', "closing transform");
        steps.push_back(std::move(step));
        if (!c.eat(';')) break;
    }
    if (!c.done()) throw ParseError("unexpected trailing input in transform script", c.pos);
    return steps;
}

std::string transform_script_text(const std::vector<TransformStep>& script) {
    std::string out;
    for (size_t i = 0; i < script.size(); ++i) {
        if (i) out += "; ";
        out += script[i].op == TransformOp::GroupMean ? "groupmean(" : "cwc(";
        out += script[i].var;
        out += " -> ";
        out += script[i].out;
        out += ")";
    }
    return out;
}

Dataset apply_transform(const Dataset& d, const TransformStep& step) {
    switch (step.op) {
        case TransformOp::GroupMean:
            return group_means(d, step.var, d.group_name(), step.out);
        case TransformOp::CenterWithinGroup:
            return center_within_group(d, step.var, d.group_name(), step.out);
    }
    throw ValidationError("unknown transform op");
}

std::vector<Dataset> apply_to_all(const std::vector<Dataset>& imps,
                                  const std::vector<TransformStep>& script) {
    std::vector<Dataset> out;
    out.reserve(imps.size());
    for (size_t i = 0; i < imps.size(); ++i) {
        Dataset cur = imps[i];
        for (const auto& step : script) {
            try {
                cur = apply_transform(cur, step);
            } catch (const std::exception& e) {
                throw ValidationError("transform '" + transform_script_text({step}) +
                                      "' failed on dataset " + std::to_string(i + 1) + ": " +
                                      e.what());
            }
        }
        out.push_back(std::move(cur));
    }
    return out;
}

}  // namespace nestmi
