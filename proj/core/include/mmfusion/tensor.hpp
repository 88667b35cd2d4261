#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mmfusion/errors.hpp"

namespace mmf {

// Dense row-major n-dimensional array of doubles. Treated as immutable after
// construction everywhere except gradient accumulation inside the tape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    // Fill constructor. Throws BadShape on empty shape or a zero extent.
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

    static Tensor from_values(std::vector<std::size_t> s, std::vector<double> values);
    static Tensor scalar(double v) { return Tensor({1}, v); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

enum class EwKind { Add, Sub, Mul, Div };

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind);
Tensor elementwise(const Tensor& a, double b, EwKind kind);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

double sum(const Tensor& a);

// MMT1 binary format: magic "MMT1", u32 LE rank, rank x u32 LE extents,
// size x f64 LE values.
void save_tensor(std::ostream& os, const Tensor& t);
Tensor load_tensor(std::istream& is);

// Low-level little-endian helpers shared by the MMDS/MMF1 formats.
namespace io {
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_f64(std::ostream& os, double v);
std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
double read_f64(std::istream& is);
void write_magic(std::ostream& os, const char magic[4]);
void expect_magic(std::istream& is, const char magic[4]);
} // namespace io

} // namespace mmf
