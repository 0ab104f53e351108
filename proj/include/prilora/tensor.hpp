#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace prilora {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major fp64 tensor.
///
/// Every extent is positive and `data().size()` always equals the product of
/// the extents. Most of the library works on rank-2 tensors; rank-1 tensors
/// are used for biases and per-feature statistics, and rank-3 appears only at
/// the edges (batch x tokens x features inputs).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor identity(std::size_t n);
    /// Builds a matrix from nested row literals; all rows must have equal length.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Extent of the leading axis of a matrix.
    std::size_t rows() const;
    /// Extent of the trailing axis of a matrix.
    std::size_t cols() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_.back() + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_.back() + j]; }

    std::span<double> row(std::size_t i) noexcept;
    std::span<const double> row(std::size_t i) const noexcept;

    /// Same data viewed under a different shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(double value) noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Standard matrix product a[m x k] * b[k x p].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m x k] * b[p x k]^T, the row-major linear-layer product.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// a[k x m]^T * b[k x p].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double c);
/// In-place a += c * b.
void axpy(double c, const Tensor& b, Tensor& a);

double max_abs_diff(const Tensor& a, const Tensor& b);
std::size_t count_nonzero(const Tensor& t) noexcept;

/// Binary encoding: u32 ndim, u64 extents, then little-endian fp64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace prilora
