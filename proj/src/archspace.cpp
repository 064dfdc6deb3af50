#include "archdiff/archspace.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

using json = nlohmann::json;

bool is_strictly_upper(const Tensor& e) {
    for (int i = 0; i < e.rows; ++i)
        for (int j = 0; j <= i && j < e.cols; ++j)
            if (e.at(i, j) != 0.0) return false;
    return true;
}

bool is_binary(const Tensor& t) {
    for (double v : t.data)
        if (v != 0.0 && v != 1.0) return false;
    return true;
}

SpacePtr build_tiny5() {
    auto s = std::make_shared<SearchSpaceSpec>();
    s->name = "tiny5";
    s->num_nodes = 5;
    s->op_vocab = {"input", "op_a", "op_b", "op_c", "op_d", "op_e", "output"};
    Tensor tmpl(5, 5);
    for (int i = 0; i + 1 < 5; ++i) tmpl.at(i, i + 1) = 1.0;
    tmpl.at(0, 4) = 1.0;
    s->adjacency_template = tmpl;
    s->fixed_nodes = {{0, 0}, {4, 6}};
    return s;
}

// NB201 cells have 4 internal nodes and 6 operation-bearing edges
// (0,1),(0,2),(1,2),(0,3),(1,3),(2,3). In the op-on-node conversion each
// edge becomes a node; an edge connects op(i,j) -> op(j,k), plus an input
// node feeding op(0,*) and op(*,3) feeding an output node. This yields the
// fixed 8-node template below.
SpacePtr build_nb201() {
    auto s = std::make_shared<SearchSpaceSpec>();
    s->name = "nb201";
    s->num_nodes = 8;
    s->op_vocab = {"input",      "zeroize",     "skip_connect", "nor_conv_1x1",
                   "nor_conv_3x3", "avg_pool_3x3", "output"};
    // order: 0=input, 1=op(0,1), 2=op(0,2), 3=op(1,2), 4=op(0,3), 5=op(1,3), 6=op(2,3), 7=output
    Tensor tmpl(8, 8);
    auto edge = [&tmpl](int a, int b) { tmpl.at(a, b) = 1.0; };
    edge(0, 1);
    edge(0, 2);
    edge(0, 4);
    edge(1, 3);
    edge(1, 5);
    edge(2, 6);
    edge(3, 6);
    edge(4, 7);
    edge(5, 7);
    edge(6, 7);
    s->adjacency_template = tmpl;
    s->fixed_nodes = {{0, 0}, {7, 6}};
    return s;
}

void check_space_shapes(const Architecture& a) {
    const int n = a.space->num_nodes;
    const int f = a.space->num_ops();
    if (a.v.rows != n || a.v.cols != f || a.e.rows != n || a.e.cols != n) {
        throw DimensionError("architecture shapes do not match space " + a.space->name);
    }
}

}  // namespace

std::vector<int> SearchSpaceSpec::free_ops() const {
    std::vector<int> ops;
    for (int k = 1; k + 1 < num_ops(); ++k) ops.push_back(k);
    return ops;
}

std::vector<int> SearchSpaceSpec::free_nodes() const {
    std::vector<int> nodes;
    for (int i = 0; i < num_nodes; ++i)
        if (!is_fixed(i)) nodes.push_back(i);
    return nodes;
}

std::optional<long long> SearchSpaceSpec::cardinality() const {
    if (!is_template()) return std::nullopt;
    const auto nodes = free_nodes();
    const long long ops = static_cast<long long>(free_ops().size());
    long long total = 1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (total > 2000000 / std::max<long long>(ops, 1)) return std::nullopt;
        total *= ops;
    }
    return total;
}

SpacePtr make_space(const std::string& name) {
    if (name == "tiny5") return build_tiny5();
    if (name == "nb201") return build_nb201();
    throw UsageError("unknown search space: " + name);
}

ValidationResult validate(const Architecture& a) {
    check_space_shapes(a);
    const auto& sp = *a.space;
    if (!is_binary(a.v)) return {false, "v not binary"};
    if (!is_binary(a.e)) return {false, "e not binary"};
    if (!is_strictly_upper(a.e)) return {false, "not upper-triangular"};
    for (int i = 0; i < sp.num_nodes; ++i) {
        int ones = 0;
        for (int k = 0; k < sp.num_ops(); ++k) ones += a.v.at(i, k) == 1.0 ? 1 : 0;
        if (ones != 1) return {false, "row not one-hot"};
    }
    for (const auto& [node, op] : sp.fixed_nodes) {
        if (a.v.at(node, op) != 1.0) return {false, "fixed node op mismatch"};
    }
    if (sp.is_template()) {
        const Tensor& tmpl = *sp.adjacency_template;
        for (std::size_t i = 0; i < tmpl.numel(); ++i) {
            if (a.e.data[i] != tmpl.data[i]) return {false, "e differs from template"};
        }
    }
    // every non-fixed node must lie on an input -> output path
    const int n = sp.num_nodes;
    std::vector<bool> from_input(n, false), to_output(n, false);
    from_input[0] = true;
    for (int i = 0; i < n; ++i) {
        if (!from_input[i]) continue;
        for (int j = i + 1; j < n; ++j)
            if (a.e.at(i, j) == 1.0) from_input[j] = true;
    }
    to_output[n - 1] = true;
    for (int j = n - 1; j >= 0; --j) {
        if (!to_output[j]) continue;
        for (int i = 0; i < j; ++i)
            if (a.e.at(i, j) == 1.0) to_output[i] = true;
    }
    for (int i = 0; i < n; ++i) {
        if (sp.is_fixed(i)) continue;
        if (!from_input[i]) return {false, "node unreachable from input"};
        if (!to_output[i]) return {false, "node does not reach output"};
    }
    return {true, ""};
}

ContinuousArchitecture to_continuous(const Architecture& a, double t) {
    check_space_shapes(a);
    return ContinuousArchitecture{a.v, a.e, t, a.space};
}

Architecture discretize(const ContinuousArchitecture& c, DiscretizeMode mode) {
    Architecture out;
    out.space = c.space;
    out.v = Tensor(c.v.rows, c.v.cols);
    out.e = Tensor(c.e.rows, c.e.cols);
    if (mode == DiscretizeMode::kThreshold) {
        for (std::size_t i = 0; i < c.v.numel(); ++i) out.v.data[i] = c.v.data[i] > 0.5 ? 1.0 : 0.0;
        for (std::size_t i = 0; i < c.e.numel(); ++i) out.e.data[i] = c.e.data[i] > 0.5 ? 1.0 : 0.0;
        return out;
    }
    // snap: argmax per row, fixed nodes enforced, template replaces e
    for (int i = 0; i < c.v.rows; ++i) {
        int best = 0;
        for (int k = 1; k < c.v.cols; ++k)
            if (c.v.at(i, k) > c.v.at(i, best)) best = k;
        auto fixed = c.space->fixed_nodes.find(i);
        if (fixed != c.space->fixed_nodes.end()) best = fixed->second;
        out.v.at(i, best) = 1.0;
    }
    if (c.space->is_template()) {
        out.e = *c.space->adjacency_template;
    } else {
        for (int i = 0; i < c.e.rows; ++i)
            for (int j = i + 1; j < c.e.cols; ++j)
                out.e.at(i, j) = c.e.at(i, j) > 0.5 ? 1.0 : 0.0;
    }
    return out;
}

Architecture random_arch(const SpacePtr& space, Rng& rng) {
    Architecture a;
    a.space = space;
    const int n = space->num_nodes;
    a.v = Tensor(n, space->num_ops());
    const auto ops = space->free_ops();
    for (int attempt = 0; attempt < 10000; ++attempt) {
        a.v.fill(0.0);
        for (int i = 0; i < n; ++i) {
            auto fixed = space->fixed_nodes.find(i);
            const int op = fixed != space->fixed_nodes.end()
                               ? fixed->second
                               : ops[rng.uniform_int(static_cast<int>(ops.size()))];
            a.v.at(i, op) = 1.0;
        }
        if (space->is_template()) {
            a.e = *space->adjacency_template;
            return a;
        }
        a.e = Tensor(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) a.e.at(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
        if (validate(a).valid) return a;
    }
    throw NumericError("random_arch: rejection sampling failed to find a valid DAG");
}

Architecture mutate(const Architecture& a, Rng& rng) {
    const auto check = validate(a);
    if (!check.valid) throw UsageError("mutate: input invalid: " + check.reason);
    const auto nodes = a.space->free_nodes();
    const auto ops = a.space->free_ops();
    if (ops.size() <= 1) throw UsageError("mutate: fewer than two free ops");
    Architecture out = a;
    const int node = nodes[rng.uniform_int(static_cast<int>(nodes.size()))];
    int cur = 0;
    for (int k = 0; k < a.space->num_ops(); ++k)
        if (a.v.at(node, k) == 1.0) cur = k;
    int next = cur;
    while (next == cur) next = ops[rng.uniform_int(static_cast<int>(ops.size()))];
    out.v.at(node, cur) = 0.0;
    out.v.at(node, next) = 1.0;
    return out;
}

std::string canonical_key(const Architecture& a) {
    check_space_shapes(a);
    std::string key = a.space->name;
    key += ':';
    for (double v : a.v.data) key += v == 1.0 ? '1' : '0';
    key += ':';
    for (int i = 0; i < a.e.rows; ++i)
        for (int j = i + 1; j < a.e.cols; ++j) key += a.e.at(i, j) == 1.0 ? '1' : '0';
    return key;
}

Architecture arch_from_key(const std::string& key, const SpacePtr& space) {
    const int n = space->num_nodes;
    const int f = space->num_ops();
    const std::string prefix = space->name + ":";
    if (key.rfind(prefix, 0) != 0) throw UsageError("arch_from_key: space mismatch");
    const std::size_t vbits = static_cast<std::size_t>(n) * f;
    const std::size_t ebits = static_cast<std::size_t>(n) * (n - 1) / 2;
    if (key.size() != prefix.size() + vbits + 1 + ebits) {
        throw UsageError("arch_from_key: malformed key");
    }
    Architecture a;
    a.space = space;
    a.v = Tensor(n, f);
    a.e = Tensor(n, n);
    std::size_t pos = prefix.size();
    for (std::size_t i = 0; i < vbits; ++i, ++pos) a.v.data[i] = key[pos] == '1' ? 1.0 : 0.0;
    if (key[pos++] != ':') throw UsageError("arch_from_key: malformed key");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) a.e.at(i, j) = key[pos++] == '1' ? 1.0 : 0.0;
    return a;
}

std::vector<Architecture> enumerate_space(const SpacePtr& space, long long cap) {
    if (!space->is_template()) {
        throw CapacityError("enumerate_space: free-edge spaces are not enumerable");
    }
    const auto card = space->cardinality();
    if (!card || *card > cap) {
        throw CapacityError("enumerate_space: space too large to enumerate");
    }
    const auto nodes = space->free_nodes();
    const auto ops = space->free_ops();
    std::vector<Architecture> all;
    all.reserve(static_cast<std::size_t>(*card));
    std::vector<std::size_t> idx(nodes.size(), 0);
    while (true) {
        Architecture a;
        a.space = space;
        a.v = Tensor(space->num_nodes, space->num_ops());
        for (const auto& [node, op] : space->fixed_nodes) a.v.at(node, op) = 1.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) a.v.at(nodes[i], ops[idx[i]]) = 1.0;
        a.e = *space->adjacency_template;
        all.push_back(std::move(a));
        std::size_t pos = 0;
        while (pos < idx.size()) {
            if (++idx[pos] < ops.size()) break;
            idx[pos] = 0;
            ++pos;
        }
        if (pos == idx.size()) break;
    }
    return all;
}

std::string arch_to_json(const Architecture& a) {
    json j;
    j["space"] = a.space->name;
    std::vector<std::vector<int>> v(a.v.rows), e(a.e.rows);
    for (int i = 0; i < a.v.rows; ++i)
        for (int k = 0; k < a.v.cols; ++k) v[i].push_back(a.v.at(i, k) == 1.0 ? 1 : 0);
    for (int i = 0; i < a.e.rows; ++i)
        for (int k = 0; k < a.e.cols; ++k) e[i].push_back(a.e.at(i, k) == 1.0 ? 1 : 0);
    j["v"] = v;
    j["e"] = e;
    return j.dump();
}

Architecture arch_from_json(const std::string& line, const SpacePtr& space) {
    json j = json::parse(line);
    if (j.at("space").get<std::string>() != space->name) {
        throw UsageError("arch_from_json: space mismatch");
    }
    Architecture a;
    a.space = space;
    const auto v = j.at("v").get<std::vector<std::vector<int>>>();
    const auto e = j.at("e").get<std::vector<std::vector<int>>>();
    a.v = Tensor(static_cast<int>(v.size()), v.empty() ? 0 : static_cast<int>(v[0].size()));
    for (int i = 0; i < a.v.rows; ++i)
        for (int k = 0; k < a.v.cols; ++k) a.v.at(i, k) = v[i][k];
    a.e = Tensor(static_cast<int>(e.size()), e.empty() ? 0 : static_cast<int>(e[0].size()));
    for (int i = 0; i < a.e.rows; ++i)
        for (int k = 0; k < a.e.cols; ++k) a.e.at(i, k) = e[i][k];
    check_space_shapes(a);
    return a;
}

SampleMetrics sample_metrics(const std::vector<Architecture>& samples,
                             const std::set<std::string>& train_keys) {
    if (samples.empty()) throw UsageError("sample_metrics: no samples");
    SampleMetrics m;
    std::set<std::string> distinct;
    long long valid = 0, novel = 0;
    for (const auto& a : samples) {
        if (!validate(a).valid) continue;
        ++valid;
        const std::string key = canonical_key(a);
        distinct.insert(key);
        if (!train_keys.count(key)) ++novel;
    }
    m.validity = 100.0 * static_cast<double>(valid) / static_cast<double>(samples.size());
    if (valid > 0) {
        m.uniqueness = 100.0 * static_cast<double>(distinct.size()) / static_cast<double>(valid);
        m.novelty = 100.0 * static_cast<double>(novel) / static_cast<double>(valid);
    }
    return m;
}

}  // namespace archdiff
