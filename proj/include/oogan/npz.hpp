#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oogan::npz {

/// One named array inside an archive. Payload bytes are kept raw
/// (little-endian, C order); convert on demand. Unsupported dtypes (e.g.
/// pickled object arrays) are carried opaquely and only fail if converted.
struct Array {
    std::string descr;             // numpy dtype string, e.g. "<f8", "|u1", "<i8"
    std::vector<int64_t> shape;
    std::vector<uint8_t> raw;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
    int64_t itemsize() const;

    std::vector<double> as_f64() const;
    std::vector<int64_t> as_i64() const;
    const std::vector<uint8_t>& as_u8() const;  // requires |u1
};

Array make_f64(std::vector<int64_t> shape, const std::vector<double>& data);
Array make_i64(std::vector<int64_t> shape, const std::vector<int64_t>& data);
Array make_u8(std::vector<int64_t> shape, std::vector<uint8_t> data);

/// std::map keeps keys ordered, so written archives are deterministic.
using Archive = std::map<std::string, Array>;

std::vector<uint8_t> encode_npy(const Array& a);
Array decode_npy(const uint8_t* data, size_t len);

/// Writes a stored (uncompressed) zip of .npy members.
void save_npz(const std::string& path, const Archive& arc);

/// Reads stored and deflated members; sizes/offsets are taken from the
/// central directory so streamed archives (deferred data descriptors) load
/// fine. Throws std::runtime_error with offset diagnostics on corruption.
Archive load_npz(const std::string& path);

/// Structural check without materializing payloads; returns member names.
std::vector<std::string> list_npz(const std::string& path);

}  // namespace oogan::npz
