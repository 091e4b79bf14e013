#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace oogan::runio {

/// Flat key = value configuration text, order-preserving. Lines starting with
/// '#' and blank lines are ignored; whitespace around keys and values is
/// trimmed.
using KvMap = std::vector<std::pair<std::string, std::string>>;

KvMap parse_kv_text(const std::string& text);
std::string format_kv_text(const KvMap& kv);
KvMap read_kv_file(const std::string& path);
void write_kv_file(const std::string& path, const KvMap& kv);

bool kv_has(const KvMap& kv, const std::string& key);
std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback = "");
void kv_set(KvMap& kv, const std::string& key, const std::string& value);

bool file_exists(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Creates the run directory skeleton (checkpoints/, traversals/, reports/).
/// An existing non-empty directory is an error unless force, which removes it
/// first.
void prepare_run_dir(const std::string& path, bool force);

/// Hex SHA-256 digest; requires the OpenSSL build.
std::string sha256_bytes(const void* data, size_t len);
std::string sha256_file(const std::string& path);

/// HTTP(S) GET to a local file; follows redirects. Throws on network or
/// status errors.
void download(const std::string& url, const std::string& dest);

}  // namespace oogan::runio
