#include "oogan/npz.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oogan::npz {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

template <typename T>
void append_le(std::vector<uint8_t>& out, T v) {
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}
uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | p[1] << 8);
}

constexpr uint32_t kLocalSig = 0x04034b50;
constexpr uint32_t kCentralSig = 0x02014b50;
constexpr uint32_t kEocdSig = 0x06054b50;

std::vector<uint8_t> inflate_raw(const uint8_t* src, size_t src_len, size_t dst_len) {
    std::vector<uint8_t> out(dst_len);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK) fail("npz: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(src_len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(dst_len);
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != dst_len)
        fail("npz: deflate stream corrupt (got " + std::to_string(zs.total_out) + " of " +
             std::to_string(dst_len) + " bytes)");
    return out;
}

struct CentralEntry {
    std::string name;
    uint16_t method = 0;
    uint32_t crc = 0;
    uint64_t csize = 0, usize = 0, local_offset = 0;
};

struct ZipIndex {
    std::vector<CentralEntry> entries;
    uint64_t file_size = 0;
};

ZipIndex read_central_directory(std::ifstream& f, const std::string& path) {
    f.seekg(0, std::ios::end);
    uint64_t fsize = static_cast<uint64_t>(f.tellg());
    if (fsize < 22) fail(path + ": too small to be a zip archive (" + std::to_string(fsize) + " bytes)");

    uint64_t scan = std::min<uint64_t>(fsize, 22 + 65535);
    std::vector<uint8_t> tail(scan);
    f.seekg(static_cast<std::streamoff>(fsize - scan));
    f.read(reinterpret_cast<char*>(tail.data()), static_cast<std::streamsize>(scan));
    if (!f) fail(path + ": read error while scanning for end-of-central-directory");

    int64_t eocd = -1;
    for (int64_t i = static_cast<int64_t>(scan) - 22; i >= 0; --i) {
        if (read_u32(tail.data() + i) == kEocdSig) {
            eocd = i;
            break;
        }
    }
    if (eocd < 0)
        fail(path + ": no end-of-central-directory signature between offset " +
             std::to_string(fsize - scan) + " and end of file (file size " +
             std::to_string(fsize) + "); file is truncated or not a zip");

    const uint8_t* p = tail.data() + eocd;
    uint16_t n_entries = read_u16(p + 10);
    uint32_t cd_size = read_u32(p + 12);
    uint32_t cd_offset = read_u32(p + 16);
    if (static_cast<uint64_t>(cd_offset) + cd_size > fsize)
        fail(path + ": central directory (offset " + std::to_string(cd_offset) + ", size " +
             std::to_string(cd_size) + ") extends past end of file (" + std::to_string(fsize) + ")");

    std::vector<uint8_t> cd(cd_size);
    f.seekg(cd_offset);
    f.read(reinterpret_cast<char*>(cd.data()), cd_size);
    if (!f) fail(path + ": read error in central directory");

    ZipIndex idx;
    idx.file_size = fsize;
    size_t pos = 0;
    for (int e = 0; e < n_entries; ++e) {
        if (pos + 46 > cd.size() || read_u32(cd.data() + pos) != kCentralSig)
            fail(path + ": bad central directory entry at directory offset " + std::to_string(pos));
        const uint8_t* q = cd.data() + pos;
        CentralEntry ce;
        ce.method = read_u16(q + 10);
        ce.crc = read_u32(q + 16);
        ce.csize = read_u32(q + 20);
        ce.usize = read_u32(q + 24);
        uint16_t name_len = read_u16(q + 28);
        uint16_t extra_len = read_u16(q + 30);
        uint16_t comment_len = read_u16(q + 32);
        ce.local_offset = read_u32(q + 42);
        if (pos + 46 + name_len > cd.size()) fail(path + ": central directory name overruns");
        ce.name.assign(reinterpret_cast<const char*>(q + 46), name_len);
        idx.entries.push_back(std::move(ce));
        pos += 46u + name_len + extra_len + comment_len;
    }
    return idx;
}

/// Location of the payload, resolved through the local header (numpy streams
/// entries, so local sizes may be zero; the central directory is authoritative).
uint64_t data_offset(std::ifstream& f, const CentralEntry& ce, const std::string& path) {
    uint8_t hdr[30];
    f.seekg(static_cast<std::streamoff>(ce.local_offset));
    f.read(reinterpret_cast<char*>(hdr), 30);
    if (!f || read_u32(hdr) != kLocalSig)
        fail(path + ": bad local header for '" + ce.name + "' at offset " +
             std::to_string(ce.local_offset));
    uint16_t name_len = read_u16(hdr + 26);
    uint16_t extra_len = read_u16(hdr + 28);
    return ce.local_offset + 30u + name_len + extra_len;
}

std::vector<uint8_t> read_member(std::ifstream& f, const CentralEntry& ce, const std::string& path) {
    uint64_t off = data_offset(f, ce, path);
    std::vector<uint8_t> comp(ce.csize);
    f.seekg(static_cast<std::streamoff>(off));
    f.read(reinterpret_cast<char*>(comp.data()), static_cast<std::streamsize>(ce.csize));
    if (!f)
        fail(path + ": member '" + ce.name + "' truncated (wanted " + std::to_string(ce.csize) +
             " bytes at offset " + std::to_string(off) + ")");

    std::vector<uint8_t> plain;
    if (ce.method == 0) {
        if (ce.csize != ce.usize)
            fail(path + ": stored member '" + ce.name + "' size mismatch");
        plain = std::move(comp);
    } else if (ce.method == 8) {
        plain = inflate_raw(comp.data(), comp.size(), ce.usize);
    } else {
        fail(path + ": member '" + ce.name + "' uses unsupported compression method " +
             std::to_string(ce.method));
    }
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, plain.data(), static_cast<uInt>(plain.size())));
    if (crc != ce.crc)
        fail(path + ": member '" + ce.name + "' fails CRC32 (stored " + std::to_string(ce.crc) +
             ", computed " + std::to_string(crc) + ")");
    return plain;
}

std::string strip_npy(const std::string& name) {
    if (name.size() > 4 && name.compare(name.size() - 4, 4, ".npy") == 0)
        return name.substr(0, name.size() - 4);
    return name;
}

}  // namespace

int64_t Array::itemsize() const {
    if (descr.size() < 2) fail("npy: bad dtype '" + descr + "'");
    if (descr == "|u1" || descr == "|i1" || descr == "|b1") return 1;
    char kind = descr[1];
    long width = std::strtol(descr.c_str() + 2, nullptr, 10);
    if ((kind == 'f' || kind == 'i' || kind == 'u') && width > 0) return width;
    fail("npy: unsupported dtype '" + descr + "'");
}

namespace {
template <typename Out>
std::vector<Out> convert(const Array& a) {
    int64_t n = a.numel();
    int64_t isz = a.itemsize();
    if (static_cast<int64_t>(a.raw.size()) != n * isz)
        fail("npy: payload size mismatch for dtype " + a.descr);
    std::vector<Out> out(static_cast<size_t>(n));
    const uint8_t* p = a.raw.data();
    char kind = a.descr == "|u1" || a.descr == "|b1" ? 'u' : (a.descr == "|i1" ? 'i' : a.descr[1]);
    for (int64_t i = 0; i < n; ++i, p += isz) {
        double dv = 0;
        int64_t iv = 0;
        if (kind == 'f') {
            if (isz == 8) {
                double x;
                std::memcpy(&x, p, 8);
                dv = x;
            } else if (isz == 4) {
                float x;
                std::memcpy(&x, p, 4);
                dv = x;
            } else
                fail("npy: unsupported float width in " + a.descr);
            iv = static_cast<int64_t>(dv);
        } else {
            uint64_t u = 0;
            for (int64_t b = 0; b < isz; ++b) u |= static_cast<uint64_t>(p[b]) << (8 * b);
            if (kind == 'i') {
                // sign-extend
                if (isz < 8 && (u & (1ull << (8 * isz - 1)))) u |= ~0ull << (8 * isz);
                iv = static_cast<int64_t>(u);
            } else {
                iv = static_cast<int64_t>(u);
            }
            dv = static_cast<double>(iv);
        }
        if constexpr (std::is_same_v<Out, double>)
            out[static_cast<size_t>(i)] = dv;
        else
            out[static_cast<size_t>(i)] = iv;
    }
    return out;
}
}  // namespace

std::vector<double> Array::as_f64() const { return convert<double>(*this); }
std::vector<int64_t> Array::as_i64() const { return convert<int64_t>(*this); }

const std::vector<uint8_t>& Array::as_u8() const {
    if (descr != "|u1" && descr != "|b1")
        fail("npy: expected |u1 payload, have dtype '" + descr + "'");
    if (static_cast<int64_t>(raw.size()) != numel()) fail("npy: u8 payload size mismatch");
    return raw;
}

Array make_f64(std::vector<int64_t> shape, const std::vector<double>& data) {
    Array a;
    a.descr = "<f8";
    a.shape = std::move(shape);
    a.raw.resize(data.size() * 8);
    std::memcpy(a.raw.data(), data.data(), a.raw.size());
    if (a.numel() != static_cast<int64_t>(data.size())) fail("make_f64: shape/data mismatch");
    return a;
}

Array make_i64(std::vector<int64_t> shape, const std::vector<int64_t>& data) {
    Array a;
    a.descr = "<i8";
    a.shape = std::move(shape);
    a.raw.resize(data.size() * 8);
    std::memcpy(a.raw.data(), data.data(), a.raw.size());
    if (a.numel() != static_cast<int64_t>(data.size())) fail("make_i64: shape/data mismatch");
    return a;
}

Array make_u8(std::vector<int64_t> shape, std::vector<uint8_t> data) {
    Array a;
    a.descr = "|u1";
    a.shape = std::move(shape);
    a.raw = std::move(data);
    if (a.numel() != static_cast<int64_t>(a.raw.size())) fail("make_u8: shape/data mismatch");
    return a;
}

std::vector<uint8_t> encode_npy(const Array& a) {
    std::ostringstream hd;
    hd << "{'descr': '" << a.descr << "', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < a.shape.size(); ++i) hd << a.shape[i] << (a.shape.size() == 1 ? "," : (i + 1 < a.shape.size() ? ", " : ""));
    hd << "), }";
    std::string header = hd.str();
    size_t unpadded = 6 + 2 + 2 + header.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    header.append(pad, ' ');
    header.push_back('\n');

    std::vector<uint8_t> out;
    const char magic[] = "\x93NUMPY";
    out.insert(out.end(), magic, magic + 6);
    out.push_back(1);
    out.push_back(0);
    append_le<uint16_t>(out, static_cast<uint16_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), a.raw.begin(), a.raw.end());
    return out;
}

Array decode_npy(const uint8_t* data, size_t len) {
    if (len < 10 || std::memcmp(data, "\x93NUMPY", 6) != 0) fail("npy: bad magic");
    uint8_t major = data[6];
    size_t hlen, hstart;
    if (major == 1) {
        hlen = read_u16(data + 8);
        hstart = 10;
    } else if (major == 2 || major == 3) {
        if (len < 12) fail("npy: truncated v2 header");
        hlen = read_u32(data + 8);
        hstart = 12;
    } else {
        fail("npy: unsupported format version " + std::to_string(major));
    }
    if (hstart + hlen > len) fail("npy: header overruns buffer");
    std::string header(reinterpret_cast<const char*>(data + hstart), hlen);

    auto find_value = [&](const std::string& key) -> std::string {
        size_t k = header.find("'" + key + "'");
        if (k == std::string::npos) fail("npy: header missing key '" + key + "'");
        size_t c = header.find(':', k);
        size_t start = header.find_first_not_of(" ", c + 1);
        return header.substr(start);
    };

    Array a;
    {
        std::string v = find_value("descr");
        if (v.empty() || v[0] != '\'') fail("npy: non-string descr (object arrays unsupported here)");
        size_t end = v.find('\'', 1);
        a.descr = v.substr(1, end - 1);
    }
    if (find_value("fortran_order").substr(0, 4) == "True")
        fail("npy: fortran_order arrays are not supported");
    {
        std::string v = find_value("shape");
        size_t open = v.find('('), close = v.find(')');
        if (open == std::string::npos || close == std::string::npos) fail("npy: malformed shape");
        std::string inner = v.substr(open + 1, close - open - 1);
        std::istringstream is(inner);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            size_t s = tok.find_first_not_of(" ");
            if (s == std::string::npos) continue;
            a.shape.push_back(std::stoll(tok.substr(s)));
        }
    }
    a.raw.assign(data + hstart + hlen, data + len);
    return a;
}

void save_npz(const std::string& path, const Archive& arc) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(path + ": cannot open for writing");

    struct Written {
        std::string name;
        uint32_t crc;
        uint64_t size, offset;
    };
    std::vector<Written> written;
    uint64_t pos = 0;

    for (const auto& [key, arr] : arc) {
        std::vector<uint8_t> npy = encode_npy(arr);
        std::string name = key + ".npy";
        uint32_t crc = static_cast<uint32_t>(crc32(0L, npy.data(), static_cast<uInt>(npy.size())));
        if (npy.size() >= 0xFFFFFFFFull) fail(path + ": member '" + key + "' too large for zip32");

        std::vector<uint8_t> hdr;
        append_le<uint32_t>(hdr, kLocalSig);
        append_le<uint16_t>(hdr, 20);  // version needed
        append_le<uint16_t>(hdr, 0);   // flags
        append_le<uint16_t>(hdr, 0);   // method: stored
        append_le<uint16_t>(hdr, 0);   // mod time
        append_le<uint16_t>(hdr, 0);   // mod date
        append_le<uint32_t>(hdr, crc);
        append_le<uint32_t>(hdr, static_cast<uint32_t>(npy.size()));
        append_le<uint32_t>(hdr, static_cast<uint32_t>(npy.size()));
        append_le<uint16_t>(hdr, static_cast<uint16_t>(name.size()));
        append_le<uint16_t>(hdr, 0);  // extra len
        hdr.insert(hdr.end(), name.begin(), name.end());

        f.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
        f.write(reinterpret_cast<const char*>(npy.data()), static_cast<std::streamsize>(npy.size()));
        written.push_back({name, crc, npy.size(), pos});
        pos += hdr.size() + npy.size();
    }

    uint64_t cd_start = pos;
    for (const auto& w : written) {
        std::vector<uint8_t> ce;
        append_le<uint32_t>(ce, kCentralSig);
        append_le<uint16_t>(ce, 20);  // made by
        append_le<uint16_t>(ce, 20);  // needed
        append_le<uint16_t>(ce, 0);   // flags
        append_le<uint16_t>(ce, 0);   // method
        append_le<uint16_t>(ce, 0);   // time
        append_le<uint16_t>(ce, 0);   // date
        append_le<uint32_t>(ce, w.crc);
        append_le<uint32_t>(ce, static_cast<uint32_t>(w.size));
        append_le<uint32_t>(ce, static_cast<uint32_t>(w.size));
        append_le<uint16_t>(ce, static_cast<uint16_t>(w.name.size()));
        append_le<uint16_t>(ce, 0);  // extra
        append_le<uint16_t>(ce, 0);  // comment
        append_le<uint16_t>(ce, 0);  // disk
        append_le<uint16_t>(ce, 0);  // internal attrs
        append_le<uint32_t>(ce, 0);  // external attrs
        append_le<uint32_t>(ce, static_cast<uint32_t>(w.offset));
        ce.insert(ce.end(), w.name.begin(), w.name.end());
        f.write(reinterpret_cast<const char*>(ce.data()), static_cast<std::streamsize>(ce.size()));
        pos += ce.size();
    }

    std::vector<uint8_t> eocd;
    append_le<uint32_t>(eocd, kEocdSig);
    append_le<uint16_t>(eocd, 0);
    append_le<uint16_t>(eocd, 0);
    append_le<uint16_t>(eocd, static_cast<uint16_t>(written.size()));
    append_le<uint16_t>(eocd, static_cast<uint16_t>(written.size()));
    append_le<uint32_t>(eocd, static_cast<uint32_t>(pos - cd_start));
    append_le<uint32_t>(eocd, static_cast<uint32_t>(cd_start));
    append_le<uint16_t>(eocd, 0);
    f.write(reinterpret_cast<const char*>(eocd.data()), static_cast<std::streamsize>(eocd.size()));
    f.flush();
    if (!f) fail(path + ": write failure");
}

Archive load_npz(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path + ": cannot open");
    ZipIndex idx = read_central_directory(f, path);
    Archive arc;
    for (const auto& ce : idx.entries) {
        std::vector<uint8_t> bytes = read_member(f, ce, path);
        arc[strip_npy(ce.name)] = decode_npy(bytes.data(), bytes.size());
    }
    return arc;
}

std::vector<std::string> list_npz(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path + ": cannot open");
    ZipIndex idx = read_central_directory(f, path);
    std::vector<std::string> names;
    for (const auto& ce : idx.entries) names.push_back(strip_npy(ce.name));
    return names;
}

}  // namespace oogan::npz
