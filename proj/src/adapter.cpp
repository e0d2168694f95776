#include "dylora/adapter.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "dylora/errors.hpp"

namespace dylora {

namespace {

void check_rank(const DyLoraAdapter& a, int b, const char* op) {
    if (b < a.r_min || b > a.r_max) {
        throw RankError(std::string(op) + ": rank " + std::to_string(b) +
                        " outside [" + std::to_string(a.r_min) + "," +
                        std::to_string(a.r_max) + "]");
    }
}

} // namespace

DyLoraAdapter init_adapter(Rng& rng, Matrix w0, int r_min, int r_max, double alpha,
                           double sigma) {
    const auto m = w0.rows();
    const auto d = w0.cols();
    if (r_min < 1 || r_min > r_max ||
        static_cast<std::size_t>(r_max) > std::min(m, d)) {
        throw ConfigError("init_adapter: need 1 <= r_min <= r_max <= min(m,d)=" +
                          std::to_string(std::min(m, d)) + ", got [" +
                          std::to_string(r_min) + "," + std::to_string(r_max) + "]");
    }
    if (!(alpha > 0.0)) {
        throw ConfigError("init_adapter: alpha must be positive");
    }
    if (!(sigma > 0.0)) {
        throw ConfigError("init_adapter: sigma must be positive");
    }
    DyLoraAdapter a;
    a.w0 = std::move(w0);
    a.w_up = Matrix::zeros(m, static_cast<std::size_t>(r_max));
    a.w_dw = gaussian(rng, static_cast<std::size_t>(r_max), d, sigma);
    a.alpha = alpha;
    a.r_min = r_min;
    a.r_max = r_max;
    return a;
}

std::pair<Matrix, Matrix> truncate(const DyLoraAdapter& a, int b) {
    check_rank(a, b, "truncate");
    return {slice_rows(a.w_dw, 1, static_cast<std::size_t>(b)),
            slice_cols(a.w_up, 1, static_cast<std::size_t>(b))};
}

std::pair<Matrix, Matrix> row_col_at(const DyLoraAdapter& a, int b) {
    check_rank(a, b, "row_col_at");
    const auto ub = static_cast<std::size_t>(b);
    return {slice_rows(a.w_dw, ub, ub), slice_cols(a.w_up, ub, ub)};
}

Matrix forward(const DyLoraAdapter& a, const Matrix& x, int b) {
    check_rank(a, b, "forward");
    if (x.rows() != a.in_dim()) {
        throw ShapeError("forward: input has " + std::to_string(x.rows()) +
                         " rows, adapter expects " + std::to_string(a.in_dim()));
    }
    const auto ub = static_cast<std::size_t>(b);
    Matrix h = matmul(a.w0, x);
    const Matrix dw_x = matmul(slice_rows(a.w_dw, 1, ub), x);   // b x n
    Matrix delta = matmul(slice_cols(a.w_up, 1, ub), dw_x);     // m x n
    delta *= a.alpha / static_cast<double>(b);
    h += delta;
    return h;
}

AdapterGrads backward(const DyLoraAdapter& a, const Matrix& x, int b,
                      const Matrix& g_out) {
    check_rank(a, b, "backward");
    if (x.rows() != a.in_dim() || g_out.rows() != a.out_dim() ||
        g_out.cols() != x.cols()) {
        throw ShapeError("backward: x is " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.cols()) + ", g_out is " +
                         std::to_string(g_out.rows()) + "x" +
                         std::to_string(g_out.cols()));
    }
    const auto ub = static_cast<std::size_t>(b);
    const double scale = a.alpha / static_cast<double>(b);
    const Matrix dw_x = matmul(slice_rows(a.w_dw, 1, ub), x); // b x n
    AdapterGrads g;
    g.b = b;
    g.g_up = matmul_transb(g_out, dw_x); // m x b
    g.g_up *= scale;
    g.g_dw = matmul_transb(matmul_transa(slice_cols(a.w_up, 1, ub), g_out), x); // b x d
    g.g_dw *= scale;
    return g;
}

Matrix merge(const DyLoraAdapter& a, int b) {
    check_rank(a, b, "merge");
    const auto ub = static_cast<std::size_t>(b);
    Matrix delta = matmul(slice_cols(a.w_up, 1, ub), slice_rows(a.w_dw, 1, ub));
    delta *= a.alpha / static_cast<double>(b);
    return a.w0 + delta;
}

DyLoraAdapter reranged(const DyLoraAdapter& a, int r_min, int r_max) {
    if (r_min < 1 || r_min > r_max ||
        static_cast<std::size_t>(r_max) > a.w_dw.rows()) {
        throw RankError("reranged: need 1 <= r_min <= r_max <= " +
                        std::to_string(a.w_dw.rows()));
    }
    DyLoraAdapter out = a;
    out.r_min = r_min;
    out.r_max = r_max;
    return out;
}

// --- checkpoint i/o -------------------------------------------------------
//
// Little-endian binary: magic, u32 version, u64 dims/ranks, f64 alpha, then
// the three matrices as raw f64 payloads. Raw doubles round-trip bit-exactly.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kAdapterMagic[8] = {'D', 'Y', 'L', 'O', 'C', 'K', 'P', '\0'};
constexpr char kMatrixMagic[8] = {'D', 'Y', 'L', 'O', 'M', 'A', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_payload(std::ostream& os, const Matrix& m) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

Matrix read_payload(std::istream& is, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    return m;
}

void check_magic(std::istream& is, const char (&magic)[8], const std::string& path) {
    char buf[8] = {};
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0) {
        throw IoError(path + ": not a recognized checkpoint file");
    }
}

} // namespace

void save_adapter(const DyLoraAdapter& a, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    os.write(kAdapterMagic, 8);
    write_u32(os, kFormatVersion);
    write_u64(os, a.out_dim());
    write_u64(os, a.in_dim());
    write_u64(os, static_cast<std::uint64_t>(a.r_min));
    write_u64(os, static_cast<std::uint64_t>(a.r_max));
    write_f64(os, a.alpha);
    write_payload(os, a.w0);
    write_payload(os, a.w_up);
    write_payload(os, a.w_dw);
    if (!os) {
        throw IoError("short write to " + path);
    }
}

DyLoraAdapter load_adapter(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path);
    }
    check_magic(is, kAdapterMagic, path);
    const auto version = read_u32(is);
    if (version != kFormatVersion) {
        throw IoError(path + ": unsupported checkpoint version " +
                      std::to_string(version));
    }
    const auto m = read_u64(is);
    const auto d = read_u64(is);
    const auto r_min = read_u64(is);
    const auto r_max = read_u64(is);
    DyLoraAdapter a;
    a.alpha = read_f64(is);
    a.r_min = static_cast<int>(r_min);
    a.r_max = static_cast<int>(r_max);
    a.w0 = read_payload(is, m, d);
    a.w_up = read_payload(is, m, r_max);
    a.w_dw = read_payload(is, r_max, d);
    if (!is) {
        throw IoError(path + ": truncated checkpoint");
    }
    return a;
}

void save_matrix(const Matrix& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path + " for writing");
    }
    os.write(kMatrixMagic, 8);
    write_u32(os, kFormatVersion);
    write_u64(os, m.rows());
    write_u64(os, m.cols());
    write_payload(os, m);
    if (!os) {
        throw IoError("short write to " + path);
    }
}

Matrix load_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open " + path);
    }
    check_magic(is, kMatrixMagic, path);
    const auto version = read_u32(is);
    if (version != kFormatVersion) {
        throw IoError(path + ": unsupported matrix version " + std::to_string(version));
    }
    const auto rows = read_u64(is);
    const auto cols = read_u64(is);
    Matrix m = read_payload(is, rows, cols);
    if (!is) {
        throw IoError(path + ": truncated matrix file");
    }
    return m;
}

} // namespace dylora
