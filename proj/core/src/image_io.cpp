#include "vismpc/image_io.h"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace vismpc {

namespace {

void put_u32_be(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = crc32(crc32(0L, nullptr, 0), out.data() + start,
                            static_cast<uInt>(out.size() - start));
    put_u32_be(out, static_cast<uint32_t>(crc));
}

unsigned char to_u8(float v) {
    const float c = std::min(std::max(v, 0.0f), 1.0f);
    return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

} // namespace

void write_png(const std::string& path, const Frame& frame) {
    if (frame.shape.size() != 3 || frame.dim(2) != 3)
        throw std::invalid_argument("png: frame must be H x W x 3");
    const int h = frame.dim(0), w = frame.dim(1);

    // filter 0 scanlines
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + 3 * w));
    for (int r = 0; r < h; ++r) {
        raw.push_back(0);
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < 3; ++k) raw.push_back(to_u8(frame.at(r, c, k)));
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    comp.resize(comp_len);

    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(w));
    put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", comp);
    put_chunk(png, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("png: cannot write " + path);
    f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

namespace {
constexpr char kImgMagic[8] = {'V', 'M', 'P', 'C', 'I', 'M', 'G', '1'};
}

void write_frame(const std::string& path, const Frame& frame) {
    if (frame.shape.size() != 3) throw std::invalid_argument("frame: must be H x W x C");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("frame: cannot write " + path);
    f.write(kImgMagic, sizeof(kImgMagic));
    const uint32_t dims[3] = {static_cast<uint32_t>(frame.dim(0)),
                              static_cast<uint32_t>(frame.dim(1)),
                              static_cast<uint32_t>(frame.dim(2))};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(frame.data.data()),
            static_cast<std::streamsize>(frame.numel() * sizeof(float)));
}

Frame read_frame(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("frame: cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kImgMagic, sizeof(kImgMagic)) != 0)
        throw std::runtime_error("frame: bad magic in " + path);
    uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    Frame frame({static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])});
    f.read(reinterpret_cast<char*>(frame.data.data()),
           static_cast<std::streamsize>(frame.numel() * sizeof(float)));
    if (!f) throw std::runtime_error("frame: truncated " + path);
    return frame;
}

Frame tile_frames(const std::vector<Frame>& frames, int cols, int pad) {
    if (frames.empty()) throw std::invalid_argument("tile: no frames");
    const int h = frames[0].dim(0), w = frames[0].dim(1);
    const int rows = (static_cast<int>(frames.size()) + cols - 1) / cols;
    Frame out({rows * (h + pad) + pad, cols * (w + pad) + pad, 3}, 1.0f);
    for (size_t i = 0; i < frames.size(); ++i) {
        const int gr = static_cast<int>(i) / cols, gc = static_cast<int>(i) % cols;
        const int r0 = pad + gr * (h + pad), c0 = pad + gc * (w + pad);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                for (int k = 0; k < 3; ++k) out.at(r0 + r, c0 + c, k) = frames[i].at(r, c, k);
    }
    return out;
}

void draw_cross(Frame& frame, int row, int col, float r, float g, float b) {
    const int h = frame.dim(0), w = frame.dim(1);
    for (int d = -2; d <= 2; ++d) {
        const int rr = std::clamp(row + d, 0, h - 1);
        const int cc = std::clamp(col + d, 0, w - 1);
        const int rc = std::clamp(row, 0, h - 1);
        const int cm = std::clamp(col, 0, w - 1);
        frame.at(rr, cm, 0) = r;
        frame.at(rr, cm, 1) = g;
        frame.at(rr, cm, 2) = b;
        frame.at(rc, cc, 0) = r;
        frame.at(rc, cc, 1) = g;
        frame.at(rc, cc, 2) = b;
    }
}

} // namespace vismpc
