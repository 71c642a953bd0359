#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nestmi {

// ===========================================================================
// Parameter traces of a sampler run
// ===========================================================================
//
// One trace per monitored parameter, stored every `stride` scans. A stored
// row belongs to the burn-in phase when its iteration is <= n_burn and to the
// imputation phase otherwise, so the phase boundary exists exactly once.
//
// The on-disk form is a delimited file with columns
//   iteration, phase, <one column per parameter>
// where phase is "burnin" or "imputation". Parameter names may contain the
// delimiter (e.g. "Beta[1,2]") and are therefore double-quoted in the header;
// data cells never need quoting. Reading recovers n_burn as the largest
// stored burn-in iteration and the stride from consecutive stored rows.

struct ChainStore {
    std::vector<std::string> names;
    std::vector<std::vector<double>> traces;  // traces[k] belongs to names[k]
    std::vector<long> iterations;             // ascending scan indices, 1-based
    long n_burn = 0;
    int stride = 1;

    int n_params() const { return static_cast<int>(names.size()); }
    long n_stored() const { return static_cast<long>(iterations.size()); }
    bool is_burnin(long row) const { return iterations[static_cast<size_t>(row)] <= n_burn; }

    int param_index(const std::string& name) const;          // -1 when absent
    const std::vector<double>& trace(const std::string& name) const;  // throws ValidationError
    // Post-burn-in portion of one trace (what diagnostics run on).
    std::vector<double> imputation_trace(const std::string& name) const;

    // values must match names in length; iterations must stay ascending.
    void append(long iteration, const std::vector<double>& values);
};

void write_chain_store(const ChainStore& c, std::ostream& out, char delim = ',');
void write_chain_store_file(const ChainStore& c, const std::string& path, char delim = ',');

ChainStore read_chain_store(std::istream& in, char delim = ',');
ChainStore read_chain_store_file(const std::string& path, char delim = ',');

}  // namespace nestmi
