#include "prilora/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "prilora/binary_io.hpp"
#include "prilora/errors.hpp"

namespace prilora {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
}

void require_matrix(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw DimensionError("from_rows: no rows");
    const std::size_t cols = rows.begin()->size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    require_matrix(*this, "rows");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require_matrix(*this, "cols");
    return shape_[1];
}

std::span<double> Tensor::row(std::size_t i) noexcept {
    const auto w = shape_.back();
    return std::span<double>(data_).subspan(i * w, w);
}

std::span<const double> Tensor::row(std::size_t i) const noexcept {
    const auto w = shape_.back();
    return std::span<const double>(data_).subspan(i * w, w);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()));
    }
    const auto m = a.rows(), k = a.cols(), p = b.cols();
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        auto orow = out.row(i);
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a(i, t);
            if (av == 0.0) continue;
            auto brow = b.row(t);
            for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: inner extents differ, " + shape_string(a.shape()) + " * " +
                             shape_string(b.shape()) + "^T");
    }
    const auto m = a.rows(), k = a.cols(), p = b.rows();
    Tensor out({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            auto brow = b.row(j);
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += arow[t] * brow[t];
            out(i, j) = s;
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: inner extents differ, " + shape_string(a.shape()) + "^T * " +
                             shape_string(b.shape()));
    }
    const auto k = a.rows(), m = a.cols(), p = b.cols();
    Tensor out({m, p});
    for (std::size_t t = 0; t < k; ++t) {
        auto arow = a.row(t);
        auto brow = b.row(t);
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            auto orow = out.row(i);
            for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Tensor scaled(const Tensor& a, double c) {
    Tensor out = a;
    for (auto& v : out.data()) v *= c;
    return out;
}

void axpy(double c, const Tensor& b, Tensor& a) {
    require_same_shape(a, b, "axpy");
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] += c * b[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::size_t count_nonzero(const Tensor& t) noexcept {
    return static_cast<std::size_t>(
        std::count_if(t.data().begin(), t.data().end(), [](double v) { return v != 0.0; }));
}

void write_tensor(std::ostream& out, const Tensor& t) {
    io::write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) io::write_u64(out, e);
    for (double v : t.data()) io::write_f64(out, v);
}

Tensor read_tensor(std::istream& in) {
    const auto ndim = io::read_u32(in);
    if (ndim == 0 || ndim > 8) throw FormatError("tensor header has invalid rank " + std::to_string(ndim));
    Shape shape(ndim);
    for (auto& e : shape) {
        e = io::read_u64(in);
        if (e == 0 || e > (std::size_t{1} << 32)) throw FormatError("tensor header has invalid extent");
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = io::read_f64(in);
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace prilora
