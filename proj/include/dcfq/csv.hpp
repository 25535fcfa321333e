#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace dcfq {

// Number formatting for CSV output: fixed notation chosen by printf %.12g,
// identical across runs and platforms for the same double. Non-finite means
// "the model has no finite answer here" and is spelled out as inf/nan.
inline std::string csv_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string csv_num(std::uint64_t v) { return std::to_string(v); }
inline std::string csv_num(int v) { return std::to_string(v); }

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }

private:
    std::ostream& os_;
};

} // namespace dcfq
