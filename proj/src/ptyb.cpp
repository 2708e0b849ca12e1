#include "ptycho/ptyb.hpp"

#include "ptycho/core.hpp"

#include <cstring>
#include <fstream>

namespace ptycho::ptyb {

namespace {

constexpr char kMagic[5] = {'P', 'T', 'Y', 'B', '1'};

// All supported targets are little-endian; serialize raw.
template <class T>
void write_raw(std::ofstream& os, const T* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_raw(std::ifstream& is, T* p, std::size_t n, const std::string& path) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw DataError("PTYB: truncated file: " + path);
}

} // namespace

void save(const std::string& path, const Array& a) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("PTYB: cannot open for write: " + path);
    os.write(kMagic, 5);
    const std::uint8_t code = static_cast<std::uint8_t>(a.dtype);
    const std::uint8_t ndim = static_cast<std::uint8_t>(a.shape.size());
    os.put(static_cast<char>(code));
    os.put(static_cast<char>(ndim));
    write_raw(os, a.shape.data(), a.shape.size());
    switch (a.dtype) {
    case DType::f64: write_raw(os, a.f64.data(), a.f64.size()); break;
    case DType::c128: write_raw(os, a.c128.data(), a.c128.size()); break;
    case DType::u8: write_raw(os, a.u8.data(), a.u8.size()); break;
    }
    if (!os) throw DataError("PTYB: write failed: " + path);
}

Array load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("PTYB: cannot open: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0) throw DataError("PTYB: bad magic: " + path);
    std::uint8_t code = 0, ndim = 0;
    is.read(reinterpret_cast<char*>(&code), 1);
    is.read(reinterpret_cast<char*>(&ndim), 1);
    if (!is) throw DataError("PTYB: truncated header: " + path);
    Array a;
    if (code != 1 && code != 2 && code != 3) throw DataError("PTYB: unknown dtype code: " + path);
    a.dtype = static_cast<DType>(code);
    a.shape.resize(ndim);
    read_raw(is, a.shape.data(), ndim, path);
    const std::uint64_t n = a.count();
    switch (a.dtype) {
    case DType::f64:
        a.f64.resize(n);
        read_raw(is, a.f64.data(), n, path);
        break;
    case DType::c128:
        a.c128.resize(n);
        read_raw(is, a.c128.data(), n, path);
        break;
    case DType::u8:
        a.u8.resize(n);
        read_raw(is, a.u8.data(), n, path);
        break;
    }
    return a;
}

void save_f64(const std::string& path, const std::vector<double>& data,
              const std::vector<std::uint64_t>& shape) {
    Array a;
    a.dtype = DType::f64;
    a.shape = shape;
    a.f64 = data;
    if (a.count() != data.size()) throw DataError("PTYB: shape/data mismatch: " + path);
    save(path, a);
}

void save_c128(const std::string& path, const std::vector<std::complex<double>>& data,
               const std::vector<std::uint64_t>& shape) {
    Array a;
    a.dtype = DType::c128;
    a.shape = shape;
    a.c128 = data;
    if (a.count() != data.size()) throw DataError("PTYB: shape/data mismatch: " + path);
    save(path, a);
}

void save_u8(const std::string& path, const std::vector<std::uint8_t>& data,
             const std::vector<std::uint64_t>& shape) {
    Array a;
    a.dtype = DType::u8;
    a.shape = shape;
    a.u8 = data;
    if (a.count() != data.size()) throw DataError("PTYB: shape/data mismatch: " + path);
    save(path, a);
}

} // namespace ptycho::ptyb
