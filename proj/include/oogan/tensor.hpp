#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace oogan {

/// Dense row-major double tensor with a dynamic shape. The whole toolkit runs
/// in double precision so that analytic-vs-numeric gradient comparisons and
/// bitwise replay checks are not confounded by accumulation error.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool empty() const { return v.empty(); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    double& at(int a) {
        assert(rank() == 1);
        return v[static_cast<size_t>(a)];
    }
    double& at(int a, int b) {
        assert(rank() == 2);
        return v[static_cast<size_t>(a) * shape[1] + b];
    }
    double& at(int a, int b, int c) {
        assert(rank() == 3);
        return v[(static_cast<size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    double& at(int a, int b, int c, int d) {
        assert(rank() == 4);
        return v[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    double at(int a) const { return const_cast<Tensor*>(this)->at(a); }
    double at(int a, int b) const { return const_cast<Tensor*>(this)->at(a, b); }
    double at(int a, int b, int c) const { return const_cast<Tensor*>(this)->at(a, b, c); }
    double at(int a, int b, int c, int d) const {
        return const_cast<Tensor*>(this)->at(a, b, c, d);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor& zero_() {
        std::fill(v.begin(), v.end(), 0.0);
        return *this;
    }
    Tensor& fill_(double x) {
        std::fill(v.begin(), v.end(), x);
        return *this;
    }
    Tensor& add_(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Tensor& mul_(double s) {
        for (double& x : v) x *= s;
        return *this;
    }

    /// Reinterpret the storage under a new shape with equal element count.
    Tensor reshaped(std::vector<int> s) const;

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::fabs(x));
        return m;
    }
};

std::string shape_string(const std::vector<int>& shape);

}  // namespace oogan
