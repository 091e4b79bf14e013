#include "oogan/runio.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef OOGAN_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <openssl/evp.h>
#endif
#include "httplib.h"

namespace fs = std::filesystem;

namespace oogan::runio {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        kv_set(kv, key, trim(t.substr(eq + 1)));
    }
    return kv;
}

std::string format_kv_text(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

KvMap read_kv_file(const std::string& path) { return parse_kv_text(read_file(path)); }

void write_kv_file(const std::string& path, const KvMap& kv) {
    write_file(path, format_kv_text(kv));
}

bool kv_has(const KvMap& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return true;
    return false;
}

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    return fallback;
}

void kv_set(KvMap& kv, const std::string& key, const std::string& value) {
    for (auto& [k, v] : kv)
        if (k == key) {
            v = value;
            return;
        }
    kv.emplace_back(key, value);
}

bool file_exists(const std::string& path) { return fs::exists(path); }

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error(path + ": write failure");
}

void prepare_run_dir(const std::string& path, bool force) {
    if (fs::exists(path)) {
        if (!fs::is_directory(path))
            throw std::invalid_argument(path + ": exists and is not a directory");
        if (!fs::is_empty(path)) {
            if (!force)
                throw std::invalid_argument(path +
                                            ": run directory exists; pass --force to replace it");
            fs::remove_all(path);
        }
    }
    fs::create_directories(fs::path(path) / "checkpoints");
    fs::create_directories(fs::path(path) / "traversals");
    fs::create_directories(fs::path(path) / "reports");
}

#ifdef OOGAN_HAVE_OPENSSL

std::string sha256_bytes(const void* data, size_t len) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int md_len = 0;
    if (!EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr))
        throw std::runtime_error("sha256: digest failure");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

#else

std::string sha256_bytes(const void*, size_t) {
    throw std::runtime_error("sha256: built without OpenSSL");
}

#endif

std::string sha256_file(const std::string& path) {
    std::string bytes = read_file(path);
    return sha256_bytes(bytes.data(), bytes.size());
}

void download(const std::string& url, const std::string& dest) {
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("download: URL without scheme: " + url);
    std::string scheme = url.substr(0, scheme_end);
    size_t host_start = scheme_end + 3;
    size_t path_start = url.find('/', host_start);
    std::string host = url.substr(host_start, path_start == std::string::npos
                                                  ? std::string::npos
                                                  : path_start - host_start);
    std::string target = path_start == std::string::npos ? "/" : url.substr(path_start);
#ifndef OOGAN_HAVE_OPENSSL
    if (scheme == "https")
        throw std::runtime_error("download: https requires the OpenSSL build");
#endif
    std::string origin = scheme + "://" + host;
    httplib::Client cli(origin);
    cli.set_follow_location(true);
    cli.set_read_timeout(300, 0);
    cli.set_connection_timeout(30, 0);

    std::ofstream out(dest, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(dest + ": cannot open for writing");
    auto res = cli.Get(target, [&](const char* data, size_t len) {
        out.write(data, static_cast<std::streamsize>(len));
        return static_cast<bool>(out);
    });
    if (!res)
        throw std::runtime_error("download: request to " + url + " failed: " +
                                 httplib::to_string(res.error()));
    if (res->status != 200)
        throw std::runtime_error("download: " + url + " returned status " +
                                 std::to_string(res->status));
    out.close();
    if (!out) throw std::runtime_error(dest + ": write failure");
}

}  // namespace oogan::runio
