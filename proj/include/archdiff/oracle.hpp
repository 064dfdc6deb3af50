#pragma once

#include <map>
#include <string>
#include <vector>

#include "archdiff/archspace.hpp"

namespace archdiff {

// Deterministic synthetic benchmark: a pure, enumerable property function
// over architectures. acc combines per-op bias terms with pairwise edge
// interaction terms; latency is additive in the op costs.
//
//   raw(a) = sum_i b(op_i) + sum_{(i,j): e_ij=1} s(op_i, op_j)
//   b(k) = sin(k+1),  s(p,q) = 0.1 * cos(1 + p*F + q)
//   acc(a) = 1 / (1 + exp(-raw/N))
//   latency(a) = sum_i c(op_i),  c(k) = 1 + k^2/F
inline constexpr const char* kOracleFormulaVersion = "v1";

double oracle_acc(const Architecture& a);
double oracle_latency(const Architecture& a);

struct BenchmarkEntry {
    double acc = 0.0;
    double latency = 0.0;
};

struct BenchmarkTable {
    std::string space_name;
    std::string formula_version;
    std::map<std::string, BenchmarkEntry> entries;  // canonical key -> values

    double acc_of(const std::string& key) const;
};

BenchmarkTable build_table(const SpacePtr& space, long long cap = 1000000);

// JSONL: one header line {"space":..., "formula_version":..., "entries": n}
// followed by {"key":..., "acc":..., "latency":...} sorted by key.
void save_table(const BenchmarkTable& table, const std::string& path);
BenchmarkTable load_table(const std::string& path);

// The ceil(q*|table|) highest-acc keys; ties broken by canonical key order.
std::vector<std::string> top_quantile(const BenchmarkTable& table, double q);

}  // namespace archdiff
