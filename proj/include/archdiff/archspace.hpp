#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "archdiff/rng.hpp"
#include "archdiff/tensor.hpp"

namespace archdiff {

// Search-space definition: node count, operator vocabulary, and either a
// fixed adjacency template (strictly upper triangular) or free edges.
struct SearchSpaceSpec {
    std::string name;
    int num_nodes = 0;
    std::vector<std::string> op_vocab;  // index 0 = input, index F-1 = output for template spaces
    std::optional<Tensor> adjacency_template;  // nullopt = free edges
    std::map<int, int> fixed_nodes;            // node index -> forced op index

    int num_ops() const { return static_cast<int>(op_vocab.size()); }
    bool is_template() const { return adjacency_template.has_value(); }
    bool is_fixed(int node) const { return fixed_nodes.count(node) > 0; }
    // Ops assignable to non-fixed nodes (excludes the reserved input/output slots).
    std::vector<int> free_ops() const;
    std::vector<int> free_nodes() const;
    // Number of valid architectures, or nullopt if not cheaply enumerable.
    std::optional<long long> cardinality() const;
};

using SpacePtr = std::shared_ptr<const SearchSpaceSpec>;

// Built-in spaces: "tiny5" (5 nodes, brute-forceable, 125 archs) and
// "nb201" (8 nodes, 7 ops, 15625 archs, fixed cell template).
SpacePtr make_space(const std::string& name);

// Discrete architecture: one-hot operator matrix v (N x F) and binary
// strictly-upper-triangular adjacency e (N x N). Instances may be invalid
// (e.g. produced by thresholding); validate() is the arbiter.
struct Architecture {
    Tensor v;
    Tensor e;
    SpacePtr space;
};

// Real-valued diffusion state A_t; the lower triangle (incl. diagonal) of e
// is structurally zero at all times.
struct ContinuousArchitecture {
    Tensor v;
    Tensor e;
    double t = 0.0;
    SpacePtr space;
};

struct ValidationResult {
    bool valid = false;
    std::string reason;  // empty when valid
};

enum class DiscretizeMode { kThreshold, kSnap };

ValidationResult validate(const Architecture& a);
ContinuousArchitecture to_continuous(const Architecture& a, double t = 0.0);
Architecture discretize(const ContinuousArchitecture& c, DiscretizeMode mode);
Architecture random_arch(const SpacePtr& space, Rng& rng);
Architecture mutate(const Architecture& a, Rng& rng);
std::string canonical_key(const Architecture& a);
Architecture arch_from_key(const std::string& key, const SpacePtr& space);
std::vector<Architecture> enumerate_space(const SpacePtr& space, long long cap = 1000000);

// JSONL wire format: {"space": name, "v": [[0/1,...],...], "e": [[...],...]}
std::string arch_to_json(const Architecture& a);
Architecture arch_from_json(const std::string& line, const SpacePtr& space);

struct SampleMetrics {
    double validity = 0.0;                 // percent of samples that validate
    std::optional<double> uniqueness;      // percent of valid that are distinct
    std::optional<double> novelty;         // percent of valid not in the train set
};

SampleMetrics sample_metrics(const std::vector<Architecture>& samples,
                             const std::set<std::string>& train_keys);

}  // namespace archdiff
