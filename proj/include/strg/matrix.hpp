#pragma once

// Minimal dense numeric kernel: row-major matrices, matmul, row softmax,
// layer normalization, elementwise nonlinearities and pooling. Everything
// downstream (graphs, model, training) is expressed in these primitives.
// Doubles by default; float instantiation available for speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace strg {

/// Shape or dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent external data (files, records, configs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or failed numeric checks at runtime.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix with flat storage.
template <typename T>
class BasicMatrix {
public:
    BasicMatrix() = default;

    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static BasicMatrix identity(std::size_t n) {
        BasicMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    static BasicMatrix from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        BasicMatrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& r : rows) {
            if (r.size() != m.cols_)
                throw ShapeError("from_rows: ragged initializer (row " + std::to_string(i) +
                                 " has " + std::to_string(r.size()) + " entries, expected " +
                                 std::to_string(m.cols_) + ")");
            std::size_t j = 0;
            for (T v : r) m(i, j++) = v;
            ++i;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool same_shape(const BasicMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;
using Vector = std::vector<double>;

template <typename T>
bool is_finite(const BasicMatrix<T>& m) {
    for (T v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool is_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// C = A * B with fixed row-major accumulation order (deterministic).
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: lhs " + a.shape_str() + " incompatible with rhs " + b.shape_str());
    BasicMatrix<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            if (aik == T{0}) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// C = A * B^T.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: lhs " + a.shape_str() + " incompatible with rhs^T " +
                         std::to_string(b.cols()) + "x" + std::to_string(b.rows()));
    BasicMatrix<T> c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto bj = b.row(j);
            T acc{0};
            for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
            c(i, j) = acc;
        }
    }
    return c;
}

/// C = A^T * B.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: lhs^T " + std::to_string(a.cols()) + "x" +
                         std::to_string(a.rows()) + " incompatible with rhs " + b.shape_str());
    BasicMatrix<T> c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ak = a.row(k);
        auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const T aki = ak[i];
            if (aki == T{0}) continue;
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
    BasicMatrix<T> t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
    BasicMatrix<T> c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    return c;
}

template <typename T>
void add_in_place(BasicMatrix<T>& a, const BasicMatrix<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add_in_place: " + a.shape_str() + " vs " + b.shape_str());
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += bd[i];
}

template <typename T>
BasicMatrix<T> scale(const BasicMatrix<T>& a, T s) {
    BasicMatrix<T> c = a;
    for (T& v : c.data()) v *= s;
    return c;
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
template <typename T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
    BasicMatrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto src = m.row(i);
        auto dst = out.row(i);
        T mx = src[0];
        for (T v : src) mx = std::max(mx, v);
        T sum{0};
        for (std::size_t j = 0; j < src.size(); ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        for (T& v : dst) v /= sum;
    }
    return out;
}

/// Given s = softmax(f) for one row and ds, recovers df.
/// df_j = s_j * (ds_j - sum_k ds_k s_k), applied row by row.
template <typename T>
BasicMatrix<T> softmax_rows_backward(const BasicMatrix<T>& softmax_out, const BasicMatrix<T>& dout) {
    if (!softmax_out.same_shape(dout))
        throw ShapeError("softmax_rows_backward: " + softmax_out.shape_str() + " vs " + dout.shape_str());
    BasicMatrix<T> din(softmax_out.rows(), softmax_out.cols());
    for (std::size_t i = 0; i < softmax_out.rows(); ++i) {
        auto s = softmax_out.row(i);
        auto d = dout.row(i);
        T dot{0};
        for (std::size_t j = 0; j < s.size(); ++j) dot += d[j] * s[j];
        auto o = din.row(i);
        for (std::size_t j = 0; j < s.size(); ++j) o[j] = s[j] * (d[j] - dot);
    }
    return din;
}

/// Per-row statistics kept by layer_norm for the reverse pass.
struct LayerNormCache {
    Matrix xhat;         // normalized rows before gain/bias
    Vector inv_std;      // 1 / sqrt(var + eps) per row
};

/// Per-row normalization over the feature dimension: subtract the row mean,
/// divide by sqrt(row variance + eps), then scale by gain and shift by bias.
inline Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias,
                         double eps = 1e-5, LayerNormCache* cache = nullptr) {
    const std::size_t d = x.cols();
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm: gain/bias length " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()) + " vs feature width " + std::to_string(d));
    Matrix out(x.rows(), d);
    if (cache) {
        cache->xhat = Matrix(x.rows(), d);
        cache->inv_std.assign(x.rows(), 0.0);
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        double mean = 0.0;
        for (double v : xi) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xi) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        auto oi = out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xi[j] - mean) * inv;
            if (cache) cache->xhat(i, j) = xh;
            oi[j] = gain[j] * xh + bias[j];
        }
        if (cache) cache->inv_std[i] = inv;
    }
    return out;
}

/// Reverse pass of layer_norm. Accumulates dgain/dbias, returns dx.
inline Matrix layer_norm_backward(const LayerNormCache& cache, const Vector& gain,
                                  const Matrix& dy, Vector& dgain, Vector& dbias) {
    const std::size_t d = cache.xhat.cols();
    if (dy.cols() != d || dy.rows() != cache.xhat.rows())
        throw ShapeError("layer_norm_backward: dy " + dy.shape_str() + " vs cache " +
                         cache.xhat.shape_str());
    Matrix dx(dy.rows(), d);
    for (std::size_t i = 0; i < dy.rows(); ++i) {
        auto dyi = dy.row(i);
        auto xh = cache.xhat.row(i);
        double mean_dxhat = 0.0;
        double mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dyi[j] * gain[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
            dgain[j] += dyi[j] * xh[j];
            dbias[j] += dyi[j];
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        auto dxi = dx.row(i);
        const double inv = cache.inv_std[i];
        for (std::size_t j = 0; j < d; ++j)
            dxi[j] = inv * (dyi[j] * gain[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
    }
    return dx;
}

template <typename T>
BasicMatrix<T> relu(const BasicMatrix<T>& x) {
    BasicMatrix<T> out = x;
    for (T& v : out.data()) v = std::max(T{0}, v);
    return out;
}

/// dx = dy where the pre-activation was positive, else 0.
template <typename T>
BasicMatrix<T> relu_backward(const BasicMatrix<T>& pre, const BasicMatrix<T>& dy) {
    if (!pre.same_shape(dy))
        throw ShapeError("relu_backward: " + pre.shape_str() + " vs " + dy.shape_str());
    BasicMatrix<T> dx(pre.rows(), pre.cols());
    auto p = pre.data();
    auto d = dy.data();
    auto o = dx.data();
    for (std::size_t i = 0; i < p.size(); ++i) o[i] = p[i] > T{0} ? d[i] : T{0};
    return dx;
}

/// Arithmetic mean over rows.
inline Vector mean_rows(const Matrix& x) {
    if (x.rows() == 0 || x.cols() == 0)
        throw ShapeError("mean_rows: empty matrix " + x.shape_str());
    Vector out(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] += xi[j];
    }
    for (double& v : out) v /= static_cast<double>(x.rows());
    return out;
}

/// Elementwise maximum over a nonempty list of equal-length vectors.
inline Vector max_elementwise(const std::vector<Vector>& vs) {
    if (vs.empty()) throw ShapeError("max_elementwise: empty list");
    Vector out = vs.front();
    for (std::size_t k = 1; k < vs.size(); ++k) {
        if (vs[k].size() != out.size())
            throw ShapeError("max_elementwise: length " + std::to_string(vs[k].size()) +
                             " vs " + std::to_string(out.size()));
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], vs[k][j]);
    }
    return out;
}

}  // namespace strg
