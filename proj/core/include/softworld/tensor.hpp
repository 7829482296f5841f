#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace softworld {

/// Dense row-major tensor of 64-bit floats. The invariant
/// product(shape) == values.size() holds for every constructed instance.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    /// 2-d convenience: rows given as nested initializer lists.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(v_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    /// Leading/trailing dims for the common "rows x cols" view: a rank-1
    /// tensor is a single row; higher ranks fold leading dims into rows.
    int64_t rows() const;
    int64_t cols() const;

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::span<double> values() { return v_; }
    std::span<const double> values() const { return v_; }

    double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return v_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return v_[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double value);
    void zero() { fill(0.0); }

private:
    std::vector<int64_t> shape_;
    std::vector<double> v_;
};

/// C += A * B, shapes [n,k] x [k,m] -> [n,m].
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c);
/// C += A * B^T, shapes [n,k] x [m,k] -> [n,m].
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
/// C += A^T * B, shapes [n,k] x [n,m] -> [k,m].
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);

}  // namespace softworld
