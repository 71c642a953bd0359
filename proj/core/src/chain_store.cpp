#include "nestmi/chain_store.hpp"

#include <fstream>
#include <sstream>

#include "nestmi/error.hpp"
#include "nestmi/text.hpp"

namespace nestmi {

int ChainStore::param_index(const std::string& name) const {
    for (size_t k = 0; k < names.size(); ++k)
        if (names[k] == name) return static_cast<int>(k);
    return -1;
}

const std::vector<double>& ChainStore::trace(const std::string& name) const {
    int k = param_index(name);
    if (k < 0) throw ValidationError("unknown parameter '" + name + "' in chain store");
    return traces[static_cast<size_t>(k)];
}

std::vector<double> ChainStore::imputation_trace(const std::string& name) const {
    const std::vector<double>& full = trace(name);
    std::vector<double> out;
    for (long row = 0; row < n_stored(); ++row)
        if (!is_burnin(row)) out.push_back(full[static_cast<size_t>(row)]);
    return out;
}

void ChainStore::append(long iteration, const std::vector<double>& values) {
    if (values.size() != names.size())
        throw ValidationError("chain store row has " + std::to_string(values.size()) +
                              " values for " + std::to_string(names.size()) + " parameters");
    if (!iterations.empty() && iteration <= iterations.back())
        throw ValidationError("chain store iterations must be strictly increasing");
    if (traces.size() != names.size()) traces.resize(names.size());
    iterations.push_back(iteration);
    for (size_t k = 0; k < values.size(); ++k) traces[k].push_back(values[k]);
}

static std::string quoted(const std::string& s) { return "\"" + s + "\""; }

void write_chain_store(const ChainStore& c, std::ostream& out, char delim) {
    out << "iteration" << delim << "phase";
    for (const std::string& name : c.names) out << delim << quoted(name);
    out << '\n';
    for (long row = 0; row < c.n_stored(); ++row) {
        out << c.iterations[static_cast<size_t>(row)] << delim
            << (c.is_burnin(row) ? "burnin" : "imputation");
        for (const auto& tr : c.traces) out << delim << format_double(tr[static_cast<size_t>(row)]);
        out << '\n';
    }
}

void write_chain_store_file(const ChainStore& c, const std::string& path, char delim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    write_chain_store(c, out, delim);
}

// Header cells may be double-quoted (quotes never appear inside names).
static std::vector<std::string> split_header(const std::string& line, char delim,
                                             std::size_t line_offset) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (ch == '"') {
            in_quotes = !in_quotes;
        } else if (ch == delim && !in_quotes) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (in_quotes) throw ParseError("unterminated quote in header", line_offset);
    fields.push_back(cur);
    return fields;
}

ChainStore read_chain_store(std::istream& in, char delim) {
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();

    ChainStore c;
    std::size_t pos = 0;
    bool have_header = false;
    long line_no = 0;
    bool seen_imputation = false;
    long max_burnin_iter = 0;

    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::size_t end = (eol == std::string::npos) ? text.size() : eol;
        std::string line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t line_offset = pos;
        pos = (eol == std::string::npos) ? text.size() : eol + 1;
        if (line.empty()) continue;
        ++line_no;

        if (!have_header) {
            std::vector<std::string> fields = split_header(line, delim, line_offset);
            if (fields.size() < 2 || fields[0] != "iteration" || fields[1] != "phase")
                throw ParseError("chain store header must start with iteration,phase", line_offset);
            c.names.assign(fields.begin() + 2, fields.end());
            c.traces.resize(c.names.size());
            have_header = true;
            continue;
        }

        std::vector<std::string_view> fields = split_fields(line, delim);
        if (fields.size() != c.names.size() + 2)
            throw ParseError("expected " + std::to_string(c.names.size() + 2) +
                                 " fields, found " + std::to_string(fields.size()),
                             line_offset);
        std::optional<double> it = parse_double(fields[0]);
        if (!it || *it != static_cast<double>(static_cast<long>(*it)) || *it < 0)
            throw ParseError("malformed iteration index '" + std::string(fields[0]) + "'",
                             line_offset);
        long iteration = static_cast<long>(*it);

        std::string_view phase = trim(fields[1]);
        bool burnin;
        if (phase == "burnin") {
            burnin = true;
        } else if (phase == "imputation") {
            burnin = false;
        } else {
            throw ParseError("unknown phase '" + std::string(phase) + "'", line_offset);
        }
        if (burnin && seen_imputation)
            throw ParseError("burn-in row after an imputation row", line_offset);
        if (!burnin) seen_imputation = true;
        if (burnin && iteration > max_burnin_iter) max_burnin_iter = iteration;
        if (!c.iterations.empty() && iteration <= c.iterations.back())
            throw ParseError("iteration indices must be strictly increasing", line_offset);

        std::vector<double> values(c.names.size());
        for (size_t k = 0; k < c.names.size(); ++k) {
            std::optional<double> v = parse_double(fields[k + 2]);
            if (!v)
                throw ParseError("malformed numeric cell '" + std::string(fields[k + 2]) + "'",
                                 line_offset);
            values[k] = *v;
        }
        c.append(iteration, values);
    }
    if (!have_header) throw ParseError("chain store file is empty", 0);

    c.n_burn = max_burnin_iter;
    c.stride = c.n_stored() >= 2
                   ? static_cast<int>(c.iterations[1] - c.iterations[0])
                   : 1;
    return c;
}

ChainStore read_chain_store_file(const std::string& path, char delim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return read_chain_store(in, delim);
}

}  // namespace nestmi
