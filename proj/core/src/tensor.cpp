#include "softworld/tensor.hpp"

#include <cmath>

#include "softworld/errors.hpp"

namespace softworld {

namespace {
int64_t product(const std::vector<int64_t>& shape) {
    int64_t p = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        p *= d;
    }
    return p;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<size_t>(product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), v_(std::move(values)) {
    if (product(shape_) != static_cast<int64_t>(v_.size())) {
        throw ShapeError("tensor value count does not match shape");
    }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const int64_t n = static_cast<int64_t>(rows.size());
    const int64_t m = n > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    std::vector<double> v;
    v.reserve(static_cast<size_t>(n * m));
    for (const auto& row : rows) {
        if (static_cast<int64_t>(row.size()) != m) {
            throw ShapeError("ragged matrix initializer");
        }
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({n, m}, std::move(v));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int64_t Tensor::rows() const {
    if (shape_.empty()) return 0;
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

int64_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

bool Tensor::all_finite() const {
    for (double x : v_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::fill(double value) {
    for (double& x : v_) x = value;
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
    const int64_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* ai = pa + i * k;
        double* ci = pc + i * m;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            const double* bk = pb + kk * m;
            for (int64_t j = 0; j < m; ++j) {
                ci[j] += av * bk[j];
            }
        }
    }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    const int64_t n = a.rows(), k = a.cols(), m = b.rows();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* ai = pa + i * k;
        double* ci = pc + i * m;
        for (int64_t j = 0; j < m; ++j) {
            const double* bj = pb + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
    const int64_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* ai = pa + i * k;
        const double* bi = pb + i * m;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            double* ck = pc + kk * m;
            for (int64_t j = 0; j < m; ++j) {
                ck[j] += av * bi[j];
            }
        }
    }
}

}  // namespace softworld
