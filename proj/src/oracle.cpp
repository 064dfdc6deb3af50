#include "archdiff/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

using json = nlohmann::json;

int op_of(const Architecture& a, int node) {
    for (int k = 0; k < a.v.cols; ++k)
        if (a.v.at(node, k) == 1.0) return k;
    throw UsageError("oracle: node without an op");
}

double raw_score(const Architecture& a) {
    const int f = a.space->num_ops();
    double raw = 0.0;
    std::vector<int> ops(a.v.rows);
    for (int i = 0; i < a.v.rows; ++i) {
        ops[i] = op_of(a, i);
        raw += std::sin(static_cast<double>(ops[i] + 1));
    }
    for (int i = 0; i < a.e.rows; ++i) {
        for (int j = i + 1; j < a.e.cols; ++j) {
            if (a.e.at(i, j) == 1.0) {
                raw += 0.1 * std::cos(1.0 + static_cast<double>(ops[i] * f + ops[j]));
            }
        }
    }
    return raw;
}

}  // namespace

double oracle_acc(const Architecture& a) {
    const auto check = validate(a);
    if (!check.valid) throw UsageError("oracle_acc: invalid architecture: " + check.reason);
    const double raw = raw_score(a) / static_cast<double>(a.space->num_nodes);
    return 1.0 / (1.0 + std::exp(-raw));
}

double oracle_latency(const Architecture& a) {
    const auto check = validate(a);
    if (!check.valid) throw UsageError("oracle_latency: invalid architecture: " + check.reason);
    const double f = static_cast<double>(a.space->num_ops());
    double lat = 0.0;
    for (int i = 0; i < a.v.rows; ++i) {
        const double k = static_cast<double>(op_of(a, i));
        lat += 1.0 + k * k / f;
    }
    return lat;
}

double BenchmarkTable::acc_of(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) throw UsageError("benchmark table: unknown key " + key);
    return it->second.acc;
}

BenchmarkTable build_table(const SpacePtr& space, long long cap) {
    BenchmarkTable table;
    table.space_name = space->name;
    table.formula_version = kOracleFormulaVersion;
    for (const auto& a : enumerate_space(space, cap)) {
        table.entries[canonical_key(a)] = {oracle_acc(a), oracle_latency(a)};
    }
    return table;
}

void save_table(const BenchmarkTable& table, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw UsageError("save_table: cannot open " + path);
    json header;
    header["space"] = table.space_name;
    header["formula_version"] = table.formula_version;
    header["entries"] = table.entries.size();
    f << header.dump() << "\n";
    for (const auto& [key, entry] : table.entries) {
        json j;
        j["key"] = key;
        j["acc"] = entry.acc;
        j["latency"] = entry.latency;
        f << j.dump() << "\n";
    }
}

BenchmarkTable load_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("load_table: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw UsageError("load_table: empty file");
    json header = json::parse(line);
    BenchmarkTable table;
    table.space_name = header.at("space").get<std::string>();
    table.formula_version = header.at("formula_version").get<std::string>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        table.entries[j.at("key").get<std::string>()] = {j.at("acc").get<double>(),
                                                         j.at("latency").get<double>()};
    }
    const auto expected = header.at("entries").get<std::size_t>();
    if (table.entries.size() != expected) throw UsageError("load_table: entry count mismatch");
    return table;
}

std::vector<std::string> top_quantile(const BenchmarkTable& table, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw UsageError("top_quantile: q outside (0, 1]");
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(table.entries.size());
    for (const auto& [key, entry] : table.entries) ranked.emplace_back(key, entry.acc);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const auto take = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(table.entries.size())));
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < take && i < ranked.size(); ++i) keys.push_back(ranked[i].first);
    return keys;
}

}  // namespace archdiff
