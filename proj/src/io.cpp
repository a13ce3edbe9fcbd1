#include "cofap/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cofap {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open file for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("rename failed for " + target.string() + ": " + ec.message());
}

std::string f32_blob_bytes(const std::vector<double>& values) {
    std::string bytes(values.size() * 4, '\0');
    for (size_t i = 0; i < values.size(); ++i) {
        float f = static_cast<float>(values[i]);
        uint32_t u;
        std::memcpy(&u, &f, 4);
        bytes[4 * i + 0] = static_cast<char>(u & 0xff);
        bytes[4 * i + 1] = static_cast<char>((u >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<char>((u >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<char>((u >> 24) & 0xff);
    }
    return bytes;
}

std::vector<double> f32_blob_parse(const std::string& bytes) {
    if (bytes.size() % 4 != 0) throw ParseError("float32 blob length not a multiple of 4");
    std::vector<double> values(bytes.size() / 4);
    for (size_t i = 0; i < values.size(); ++i) {
        uint32_t u = (static_cast<uint32_t>(static_cast<unsigned char>(bytes[4 * i + 0]))) |
                     (static_cast<uint32_t>(static_cast<unsigned char>(bytes[4 * i + 1])) << 8) |
                     (static_cast<uint32_t>(static_cast<unsigned char>(bytes[4 * i + 2])) << 16) |
                     (static_cast<uint32_t>(static_cast<unsigned char>(bytes[4 * i + 3])) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        values[i] = static_cast<double>(f);
    }
    return values;
}

void write_f32_blob(const std::string& path, const std::vector<double>& values) {
    atomic_write_file(path, f32_blob_bytes(values));
}

std::vector<double> read_f32_blob(const std::string& path) {
    return f32_blob_parse(read_text_file(path));
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace cofap
