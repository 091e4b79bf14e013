#include "oogan/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace oogan {

Tensor Tensor::reshaped(std::vector<int> s) const {
    if (numel_of(s) != numel())
        throw std::invalid_argument("reshape: element count mismatch (" + shape_string(shape) +
                                    " -> " + shape_string(s) + ")");
    Tensor t;
    t.shape = std::move(s);
    t.v = v;
    return t;
}

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

}  // namespace oogan
