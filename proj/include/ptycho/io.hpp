#pragma once

#include "ptycho/core.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ptycho::io {

/// Flat key=value text files ('#' starts a comment line). Keys are unique.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_kv(const std::string& path);
KeyValues parse_kv_text(const std::string& text, const std::string& origin);
void write_kv(const std::string& path, const KeyValues& kv);

std::string format_double(double x); // shortest round-trip decimal, C locale
double parse_double(const std::string& s, const std::string& key);
long parse_long(const std::string& s, const std::string& key);
bool parse_bool(const std::string& s, const std::string& key);

/// 8-bit binary PGM (P5). Values are clipped to [0,1] then scaled to 0..255.
void write_pgm(const std::string& path, const RealImage& img);
RealImage read_pgm(const std::string& path);

/// Loads a real image from .pgm or .ptyb (2D f64).
RealImage read_image(const std::string& path);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
std::vector<std::uint8_t> read_bytes(const std::string& path);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

/// CSV writing with stable formatting (C locale, '\n' line ends).
struct CsvWriter {
    explicit CsvWriter(const std::string& path, const std::string& header);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);
    void close();

private:
    void* os_ = nullptr;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path, bool skip_header = true);

} // namespace ptycho::io
