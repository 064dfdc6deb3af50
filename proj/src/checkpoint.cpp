#include "archdiff/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw UsageError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::string& config_json) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("checkpoint: cannot open for writing: " + path);
    f.write(kMagic, 4);
    write_pod<std::uint32_t>(f, kVersion);
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(config_json.size()));
    f.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    write_pod<std::uint64_t>(f, params.entries.size());
    for (const auto& [name, var] : params.entries) {
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(var->value.rows));
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(var->value.cols));
        f.write(reinterpret_cast<const char*>(var->value.data.data()),
                static_cast<std::streamsize>(var->value.data.size() * sizeof(double)));
    }
    if (!f) throw UsageError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, bool requires_grad) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("checkpoint: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw UsageError("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion) {
        throw UsageError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    const auto cfg_len = read_pod<std::uint32_t>(f);
    ck.config_json.resize(cfg_len);
    f.read(ck.config_json.data(), cfg_len);
    const auto count = read_pod<std::uint64_t>(f);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const auto rows = read_pod<std::uint32_t>(f);
        const auto cols = read_pod<std::uint32_t>(f);
        Tensor t(static_cast<int>(rows), static_cast<int>(cols));
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!f) throw UsageError("checkpoint: truncated tensor payload");
        ck.params.entries[name] = make_leaf(std::move(t), requires_grad);
    }
    return ck;
}

}  // namespace archdiff
