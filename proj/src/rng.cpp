#include "oogan/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace oogan {

int64_t Rng::randint(int64_t n) {
    if (n <= 0) throw std::invalid_argument("randint: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = eng_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << "mt19937_64 " << eng_;
    return os.str();
}

Rng Rng::deserialize(const std::string& s) {
    std::istringstream is(s);
    std::string tag;
    is >> tag;
    if (tag != "mt19937_64") throw std::runtime_error("rng state: unknown engine tag '" + tag + "'");
    Rng r;
    is >> r.eng_;
    if (is.fail()) throw std::runtime_error("rng state: malformed engine state");
    return r;
}

uint64_t Rng::digest() const {
    std::string s = serialize();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace oogan
