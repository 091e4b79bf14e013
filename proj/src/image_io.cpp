#include "oogan/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace oogan::image_io {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> head;
    put_u32_be(head, static_cast<uint32_t>(payload.size()));
    f.write(reinterpret_cast<const char*>(head.data()), 4);
    f.write(type, 4);
    if (!payload.empty())
        f.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size()));
    uint32_t crc = static_cast<uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(type), 4));
    if (!payload.empty())
        crc = static_cast<uint32_t>(
            crc32(crc, payload.data(), static_cast<uInt>(payload.size())));
    std::vector<uint8_t> tail;
    put_u32_be(tail, crc);
    f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const std::string& path, const Tensor& img) {
    Tensor t = img;
    if (t.rank() == 4) {
        if (t.dim(0) != 1)
            throw std::invalid_argument("write_png: batch dimension must be 1, have " +
                                        std::to_string(t.dim(0)));
        t = t.reshaped({t.dim(1), t.dim(2), t.dim(3)});
    }
    if (t.rank() != 3) throw std::invalid_argument("write_png: expected [ch,H,W] image");
    const int ch = t.dim(0), H = t.dim(1), W = t.dim(2);
    if (ch != 1 && ch != 3)
        throw std::invalid_argument("write_png: " + std::to_string(ch) +
                                    " channels unsupported (need 1 or 3)");

    // raw scanlines: filter byte 0 + interleaved pixels
    std::vector<uint8_t> raw(static_cast<size_t>(H) * (1 + static_cast<size_t>(W) * ch));
    size_t pos = 0;
    for (int y = 0; y < H; ++y) {
        raw[pos++] = 0;
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < ch; ++c) {
                double v = std::clamp(t.at(c, y, x), 0.0, 1.0);
                raw[pos++] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    }

    uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_cap);
    if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    comp.resize(comp_cap);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(W));
    put_u32_be(ihdr, static_cast<uint32_t>(H));
    ihdr.push_back(8);                     // bit depth
    ihdr.push_back(ch == 1 ? 0 : 2);       // color type: gray / truecolor
    ihdr.push_back(0);                     // compression
    ihdr.push_back(0);                     // filter
    ihdr.push_back(0);                     // interlace
    write_chunk(f, "IHDR", ihdr);
    write_chunk(f, "IDAT", comp);
    write_chunk(f, "IEND", {});
    if (!f) throw std::runtime_error("write_png: write failure on " + path);
}

Tensor tile_grid(const Tensor& imgs, int rows, int cols, int sep, double sep_value) {
    if (imgs.rank() != 4) throw std::invalid_argument("tile_grid: expected [N,ch,H,W]");
    if (rows < 1 || cols < 1 || sep < 0) throw std::invalid_argument("tile_grid: bad geometry");
    if (imgs.dim(0) != rows * cols)
        throw std::invalid_argument("tile_grid: have " + std::to_string(imgs.dim(0)) +
                                    " tiles for a " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + " grid");
    const int ch = imgs.dim(1), H = imgs.dim(2), W = imgs.dim(3);
    const int GH = rows * H + (rows - 1) * sep;
    const int GW = cols * W + (cols - 1) * sep;
    Tensor out = Tensor::full({ch, GH, GW}, sep_value);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int n = r * cols + c;
            const int oy = r * (H + sep), ox = c * (W + sep);
            for (int k = 0; k < ch; ++k)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out.at(k, oy + y, ox + x) = imgs.at(n, k, y, x);
        }
    return out;
}

}  // namespace oogan::image_io
