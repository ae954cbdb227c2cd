#pragma once
#include <string>
#include <vector>

namespace adshot {

struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail; // worst error, counts, or failure description
};

// Randomized invariant suite with fixed seeds: RoPE re-encoding, score
// equivalence after reordering, parallel-vs-sequential probing, entropy
// bounds, selector replay, ranking against a loop-based recomputation, and
// serialization round-trip/rejection. Deterministic output.
std::vector<PropertyResult> run_verification();

} // namespace adshot
