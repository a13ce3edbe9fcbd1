// Error types and small file-IO helpers shared across the library.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cofap {

// Malformed input text (CIF, CSV, JSON); carries a line number when known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated a documented precondition.
struct ArgumentError : std::invalid_argument {
    explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A metric whose formula divides by a quantity that is zero for this input
// (zero uptake, constant target column, ...).
struct UndefinedMetricError : ArgumentError {
    explicit UndefinedMetricError(const std::string& msg) : ArgumentError(msg) {}
};

// Tensor shape mismatch; names the offending operation.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure (missing file, failed write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string read_text_file(const std::string& path);

// Writes via a temporary file in the same directory followed by rename, so
// concurrent readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& bytes);

// Flat little-endian float32 blobs (checkpoint and section-set payloads).
// Values are stored as double in memory and converted on the way through.
std::string f32_blob_bytes(const std::vector<double>& values);
std::vector<double> f32_blob_parse(const std::string& bytes);
void write_f32_blob(const std::string& path, const std::vector<double>& values);
std::vector<double> read_f32_blob(const std::string& path);

// Fixed-precision decimal formatting ("%.9f" etc.); used by canonical
// serializers so identical inputs yield byte-identical artifacts.
std::string format_fixed(double v, int decimals);

// Splits one CSV line on commas. No quoting: none of the formats here need it.
std::vector<std::string> split_csv_line(const std::string& line);

std::string trim(const std::string& s);

}  // namespace cofap
