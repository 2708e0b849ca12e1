#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace ptycho::ptyb {

// PTYB array container: magic "PTYB1", u8 dtype code (f64=1, c128=2, u8=3),
// u8 ndim, ndim x u64 little-endian shape, then raw little-endian data.

enum class DType : std::uint8_t { f64 = 1, c128 = 2, u8 = 3 };

struct Array {
    DType dtype = DType::f64;
    std::vector<std::uint64_t> shape;
    std::vector<double> f64;
    std::vector<std::complex<double>> c128;
    std::vector<std::uint8_t> u8;

    std::uint64_t count() const {
        std::uint64_t n = 1;
        for (auto s : shape) n *= s;
        return shape.empty() ? 0 : n;
    }
};

void save(const std::string& path, const Array& a);
Array load(const std::string& path);

// Convenience writers/readers for the common cases.
void save_f64(const std::string& path, const std::vector<double>& data,
              const std::vector<std::uint64_t>& shape);
void save_c128(const std::string& path, const std::vector<std::complex<double>>& data,
               const std::vector<std::uint64_t>& shape);
void save_u8(const std::string& path, const std::vector<std::uint8_t>& data,
             const std::vector<std::uint64_t>& shape);

} // namespace ptycho::ptyb
