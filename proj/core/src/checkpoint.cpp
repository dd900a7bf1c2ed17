#include "vismpc/checkpoint.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vismpc {

namespace {

constexpr char kMagic[8] = {'V', 'M', 'P', 'C', 'N', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, kVersion);
    write_u32(f, static_cast<uint32_t>(tensors.size()));
    for (const NamedTensor& nt : tensors) {
        write_u32(f, static_cast<uint32_t>(nt.name.size()));
        f.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        write_u32(f, static_cast<uint32_t>(nt.tensor.shape.size()));
        for (int d : nt.tensor.shape) write_u32(f, static_cast<uint32_t>(d));
        f.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
                static_cast<std::streamsize>(nt.tensor.numel() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (read_u32(f) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    const uint32_t count = read_u32(f);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor nt;
        const uint32_t name_len = read_u32(f);
        nt.name.resize(name_len);
        f.read(nt.name.data(), name_len);
        const uint32_t ndim = read_u32(f);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(read_u32(f));
        nt.tensor = Tensor(shape);
        f.read(reinterpret_cast<char*>(nt.tensor.data.data()),
               static_cast<std::streamsize>(nt.tensor.numel() * sizeof(float)));
        if (!f) throw std::runtime_error("checkpoint: truncated file: " + path);
        out.push_back(std::move(nt));
    }
    return out;
}

} // namespace vismpc
