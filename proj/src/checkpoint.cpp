#include "vlt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vlt {

static_assert(std::endian::native == std::endian::little, "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'L', 'T', 'W'};

template <typename T>
void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamRegistry& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kCheckpointVersion);
    write_pod<std::uint64_t>(os, params.size());
    for (const auto& [name, t] : params) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
    os.close();

    std::ofstream manifest(path + ".manifest", std::ios::trunc);
    if (!manifest) throw std::runtime_error("checkpoint: cannot open manifest for '" + path + "'");
    for (const auto& [name, t] : params) {
        manifest << name << ' ';
        for (int i = 0; i < t.rank(); ++i) {
            if (i) manifest << 'x';
            manifest << t.dim(i);
        }
        manifest << '\n';
    }
}

void load_checkpoint(const std::string& path, ParamRegistry& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' is not a VLTW container");
    }
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = read_pod<std::uint64_t>(is);
    if (count != params.size()) {
        throw std::runtime_error("checkpoint: record count " + std::to_string(count) + " does not match model (" +
                                 std::to_string(params.size()) + " parameters)");
    }
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(is));
        if (!params.contains(name)) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
        Tensor t = params.find(name);
        if (t.shape() != shape) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " + shape_str(shape) +
                                     " vs model " + shape_str(t.shape()));
        }
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    }
}

}  // namespace vlt
