#include "dylora/report_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dylora/errors.hpp"

namespace dylora {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::string out = "step,b,loss\n";
    for (const auto& row : trace) {
        out += std::to_string(row.step);
        out += ',';
        out += std::to_string(row.b);
        out += ',';
        out += format_double(row.loss);
        out += '\n';
    }
    return out;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "rank,arm,seed,metric\n";
    for (const auto& row : report.rows) {
        out += std::to_string(row.rank);
        out += ',';
        out += row.arm;
        out += ',';
        out += std::to_string(row.seed);
        out += ',';
        out += format_double(row.metric);
        out += '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) {
        throw IoError("short write to " + path);
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path);
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace dylora
