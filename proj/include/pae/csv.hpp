#pragma once

// Byte-deterministic CSV emission: ',' separators, '\n' line endings and
// 17-significant-digit floats so values round-trip exactly.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pae {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";  // folds -0 so outputs do not depend on sign of zero
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    }

    CsvWriter& header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out_ << ',';
            out_ << names[i];
        }
        out_ << '\n';
        return *this;
    }

    CsvWriter& field(const std::string& s) {
        sep();
        out_ << s;
        return *this;
    }
    CsvWriter& field(double v) { return field(format_double(v)); }
    CsvWriter& field(std::size_t v) { return field(std::to_string(v)); }
    CsvWriter& field(int v) { return field(std::to_string(v)); }

    template <typename Range>
    CsvWriter& fields(const Range& values) {
        for (const auto& v : values) field(static_cast<double>(v));
        return *this;
    }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("failed writing " + path_.string());
    }

    ~CsvWriter() {
        if (out_.is_open()) out_.close();
    }

private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }

    std::filesystem::path path_;
    std::ofstream out_;
    bool first_ = true;
};

}  // namespace pae
