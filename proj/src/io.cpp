#include "ptycho/io.hpp"

#include "ptycho/ptyb.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace ptycho::io {

KeyValues parse_kv_text(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream iss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(iss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = trimmed.substr(0, eq);
        std::string val = trimmed.substr(eq + 1);
        auto strip = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
        };
        strip(key);
        strip(val);
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv[key] = val;
    }
    return kv;
}

KeyValues read_kv(const std::string& path) {
    return parse_kv_text(read_text(path), path);
}

void write_kv(const std::string& path, const KeyValues& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    write_text(path, os.str());
}

std::string format_double(double x) {
    char buf[64];
    // shortest representation that round-trips
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    double back = 0.0;
    for (int prec = 1; prec <= 16; ++prec) {
        char tmp[64];
        std::snprintf(tmp, sizeof(tmp), "%.*g", prec, x);
        std::sscanf(tmp, "%lf", &back);
        if (back == x) return tmp;
    }
    return buf;
}

double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid number for '" + key + "': " + s);
    }
}

long parse_long(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer for '" + key + "': " + s);
    }
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("invalid boolean for '" + key + "': " + s);
}

void write_pgm(const std::string& path, const RealImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("PGM: cannot open for write: " + path);
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double x = std::clamp(img.v[i], 0.0, 1.0);
        bytes[i] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("PGM: write failed: " + path);
}

RealImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("PGM: cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw DataError("PGM: expected P5: " + path);
    auto next_int = [&]() {
        // skip whitespace and '#' comments
        for (;;) {
            int c = is.peek();
            if (c == '#') {
                std::string dummy;
                std::getline(is, dummy);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        long v = 0;
        is >> v;
        return v;
    };
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) throw DataError("PGM: bad header: " + path);
    is.get(); // single whitespace after maxval
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!is) throw DataError("PGM: truncated: " + path);
    RealImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < img.size(); ++i) img.v[i] = bytes[i] / static_cast<double>(maxval);
    return img;
}

RealImage read_image(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") return read_pgm(path);
    const auto a = ptyb::load(path);
    if (a.dtype != ptyb::DType::f64 || a.shape.size() != 2)
        throw DataError("expected 2D f64 ptyb image: " + path);
    RealImage img(static_cast<int>(a.shape[1]), static_cast<int>(a.shape[0]));
    img.v = a.f64;
    img.assert_finite(path.c_str());
    return img;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for write: " + path);
    os << text;
    if (!os) throw DataError("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    const std::string s = read_text(path);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

bool file_exists(const std::string& path) { return fs::exists(path); }

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw DataError("cannot create directory: " + path);
}

struct CsvStream {
    std::ofstream os;
};

CsvWriter::CsvWriter(const std::string& path, const std::string& header) {
    auto* s = new CsvStream;
    s->os.open(path, std::ios::binary);
    if (!s->os) {
        delete s;
        throw DataError("CSV: cannot open for write: " + path);
    }
    s->os << header << "\n";
    os_ = s;
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::row(const std::vector<std::string>& cells) {
    auto* s = static_cast<CsvStream*>(os_);
    if (!s) throw DataError("CSV: writer closed");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s->os << ",";
        s->os << cells[i];
    }
    s->os << "\n";
}

void CsvWriter::close() {
    auto* s = static_cast<CsvStream*>(os_);
    if (s) {
        s->os.close();
        delete s;
        os_ = nullptr;
    }
}

std::vector<std::vector<std::string>> read_csv(const std::string& path, bool skip_header) {
    std::istringstream iss(read_text(path));
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(iss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first && skip_header) {
            first = false;
            continue;
        }
        first = false;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            auto comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace ptycho::io
