#include "mmfusion/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace mmf {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

static void check_shape(const std::vector<std::size_t>& s) {
    if (s.empty()) throw BadShape("tensor shape must be non-empty");
    for (auto d : s)
        if (d < 1) throw BadShape("tensor extent must be >= 1");
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
    check_shape(shape);
    data.assign(shape_size(shape), fill);
}

Tensor Tensor::from_values(std::vector<std::size_t> s, std::vector<double> values) {
    check_shape(s);
    if (values.size() != shape_size(s))
        throw LengthMismatch("value list length " + std::to_string(values.size()) +
                             " != product(shape) " + std::to_string(shape_size(s)));
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
}

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
    if (!a.same_shape(b)) throw ShapeMismatch("elementwise: shapes differ");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (kind) {
            case EwKind::Add: out.data[i] += b.data[i]; break;
            case EwKind::Sub: out.data[i] -= b.data[i]; break;
            case EwKind::Mul: out.data[i] *= b.data[i]; break;
            case EwKind::Div:
                if (b.data[i] == 0.0) throw DivideByZero("elementwise: division by zero");
                out.data[i] /= b.data[i];
                break;
        }
    }
    return out;
}

Tensor elementwise(const Tensor& a, double b, EwKind kind) {
    Tensor out = a;
    if (kind == EwKind::Div && b == 0.0) throw DivideByZero("elementwise: division by zero");
    for (auto& v : out.data) {
        switch (kind) {
            case EwKind::Add: v += b; break;
            case EwKind::Sub: v -= b; break;
            case EwKind::Mul: v *= b; break;
            case EwKind::Div: v /= b; break;
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeMismatch("matmul: rank-2 tensors required");
    if (a.shape[1] != b.shape[0]) throw ShapeMismatch("matmul: inner extents differ");
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c({m, n}, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a.at(i, t);
            for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(t, j);
        }
    return c;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeMismatch("transpose: rank-2 tensor required");
    Tensor out({a.shape[1], a.shape[0]}, 0.0);
    for (std::size_t i = 0; i < a.shape[0]; ++i)
        for (std::size_t j = 0; j < a.shape[1]; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    if (a.rank() != 2) throw ShapeMismatch("softmax_rows: rank-2 tensor required");
    Tensor out = a;
    const std::size_t rows = a.shape[0], cols = a.shape[1];
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = a.at(i, 0);
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, a.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) /= denom;
    }
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return s;
}

namespace io {

void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated read (u16)");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated read (u32)");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated read (f64)");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char magic[4]) {
    char got[4];
    if (!is.read(got, 4)) throw IoError("truncated read (magic)");
    if (std::memcmp(got, magic, 4) != 0)
        throw BadMagic("bad magic, expected " + std::string(magic, 4));
}

} // namespace io

void save_tensor(std::ostream& os, const Tensor& t) {
    io::write_magic(os, "MMT1");
    io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape) io::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) io::write_f64(os, v);
    if (!os) throw IoError("tensor write failed");
}

Tensor load_tensor(std::istream& is) {
    io::expect_magic(is, "MMT1");
    const std::uint32_t rank = io::read_u32(is);
    if (rank == 0 || rank > 16) throw BadShape("tensor load: bad rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
        d = io::read_u32(is);
        if (d < 1) throw BadShape("tensor load: bad extent");
    }
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = io::read_f64(is);
    return Tensor::from_values(std::move(shape), std::move(values));
}

} // namespace mmf
