#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csskit/error.hpp"
#include "csskit/linear_map.hpp"
#include "csskit/sampling.hpp"

// File formats:
//   cube / source files   raw little-endian f64, column-major (pixel index
//                         fastest), plus a JSON sidecar at <path>.json
//   spectra CSV           header row of names, then n2 rows x rho values
//   label CSV             rows x cols integers
//   measurements          raw f64le y plus a <path>.json sidecar

namespace csskit::io {

using json = nlohmann::json;

class IoError : public Error {
public:
    using Error::Error;
};

static_assert(std::endian::native == std::endian::little, "raw f64le files assume a little-endian host");

/// Shortest round-tripping decimal form; "inf", "-inf" and "nan" for the specials.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline void write_raw(const std::filesystem::path& path, const double* data, std::size_t count)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (!out) throw IoError("short write to " + path.string());
}

inline std::vector<double> read_raw(const std::filesystem::path& path, std::size_t count)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<double> v(count);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
        throw IoError(path.string() + ": file shorter than its sidecar declares");
    in.peek();
    if (!in.eof()) throw IoError(path.string() + ": file longer than its sidecar declares");
    return v;
}

inline std::filesystem::path sidecar(const std::filesystem::path& path)
{
    return std::filesystem::path(path.string() + ".json");
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

struct CubeFile {
    Index rows = 0;
    Index cols = 0;
    Mat data; ///< (rows*cols) x channels
};

/// Writes an (rows*cols) x channels matrix with its sidecar.
inline void write_cube(const std::filesystem::path& path, Index rows, Index cols, const Mat& data)
{
    csskit::detail::require_dims(data.rows() == rows * cols, "write_cube: data rows != rows*cols");
    write_raw(path, data.data(), static_cast<std::size_t>(data.size()));
    write_json(sidecar(path), json{{"rows", rows},
                                   {"cols", cols},
                                   {"channels", data.cols()},
                                   {"dtype", "f64le"},
                                   {"layout", "pixel-major"}});
}

inline CubeFile read_cube(const std::filesystem::path& path)
{
    const json meta = read_json(sidecar(path));
    CubeFile cube;
    try {
        if (meta.at("dtype").get<std::string>() != "f64le") throw IoError(path.string() + ": dtype must be f64le");
        if (meta.at("layout").get<std::string>() != "pixel-major")
            throw IoError(path.string() + ": layout must be pixel-major");
        cube.rows = meta.at("rows").get<Index>();
        cube.cols = meta.at("cols").get<Index>();
        const Index channels = meta.at("channels").get<Index>();
        if (cube.rows <= 0 || cube.cols <= 0 || channels <= 0) throw IoError(path.string() + ": bad dims");
        auto raw = read_raw(path, static_cast<std::size_t>(cube.rows * cube.cols * channels));
        cube.data = Eigen::Map<const Mat>(raw.data(), cube.rows * cube.cols, channels);
    } catch (const json::exception& e) {
        throw IoError(sidecar(path).string() + ": " + e.what());
    }
    return cube;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    out.push_back(cell);
    return out;
}

inline double parse_number(const std::string& s, const std::string& where)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(where + ": not a number: '" + s + "'");
    }
}

} // namespace detail

/// RFC-4180 cell quoting.
inline std::string csv_cell(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

struct Spectra {
    std::vector<std::string> names;
    Mat h; ///< n2 x rho
};

inline void write_spectra(const std::filesystem::path& path, const Mat& h, const std::vector<std::string>& names)
{
    csskit::detail::require_dims(static_cast<Index>(names.size()) == h.cols(), "write_spectra: one name per column");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << csv_cell(names[j]);
    out << "\r\n";
    for (Index i = 0; i < h.rows(); ++i) {
        for (Index j = 0; j < h.cols(); ++j) out << (j ? "," : "") << format_double(h(i, j));
        out << "\r\n";
    }
}

inline Spectra read_spectra(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty spectra file");
    Spectra s;
    s.names = detail::split_csv_line(line);
    std::vector<std::vector<double>> rows;
    Index lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != s.names.size())
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(s.names.size()) + " columns");
        std::vector<double> r;
        for (auto& c : cells) r.push_back(detail::parse_number(c, path.string() + ":" + std::to_string(lineno)));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw IoError(path.string() + ": no spectral rows");
    s.h.resize(static_cast<Index>(rows.size()), static_cast<Index>(s.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < s.names.size(); ++j) s.h(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return s;
}

inline void write_labels(const std::filesystem::path& path, const std::vector<int>& labels, Index rows, Index cols)
{
    csskit::detail::require_dims(static_cast<Index>(labels.size()) == rows * cols, "write_labels: size != rows*cols");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) out << (j ? "," : "") << labels[static_cast<std::size_t>(i * cols + j)];
        out << "\r\n";
    }
}

struct LabelMap {
    Index rows = 0;
    Index cols = 0;
    std::vector<int> labels;
};

inline LabelMap read_labels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    LabelMap m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split_csv_line(line);
        if (m.rows == 0) m.cols = static_cast<Index>(cells.size());
        if (static_cast<Index>(cells.size()) != m.cols) throw IoError(path.string() + ": ragged label rows");
        for (auto& c : cells) {
            const double v = detail::parse_number(c, path.string());
            if (v != std::floor(v) || v < 0) throw IoError(path.string() + ": labels must be non-negative integers");
            m.labels.push_back(static_cast<int>(v));
        }
        ++m.rows;
    }
    if (m.rows == 0) throw IoError(path.string() + ": empty label map");
    return m;
}

inline json descriptor_json(const OperatorDescriptor& d)
{
    return json{{"scheme", to_string(d.scheme)}, {"core", to_string(d.kind)}, {"seed", d.seed},
                {"rows", d.rows},   {"cols", d.cols},           {"n1", d.n1},
                {"n2", d.n2},       {"rho", d.rho},             {"m_hat", d.m_hat},
                {"m", d.m},         {"decorrelation", d.decorrelation}};
}

inline OperatorDescriptor descriptor_from_json(const json& j)
{
    OperatorDescriptor d;
    d.scheme = parse_scheme(j.at("scheme").get<std::string>());
    d.kind = parse_core_kind(j.at("core").get<std::string>());
    d.seed = j.at("seed").get<std::uint64_t>();
    d.rows = j.at("rows").get<Index>();
    d.cols = j.at("cols").get<Index>();
    d.n1 = j.at("n1").get<Index>();
    d.n2 = j.at("n2").get<Index>();
    d.rho = j.value("rho", Index{0});
    d.m_hat = j.at("m_hat").get<Index>();
    d.m = j.at("m").get<Index>();
    d.decorrelation = j.value("decorrelation", std::string("none"));
    return d;
}

/// JSON has no infinity; noiseless SNR is written as null.
inline json snr_json(double snr_db) { return std::isinf(snr_db) ? json(nullptr) : json(snr_db); }

inline double snr_from_json(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

inline void write_measurements(const std::filesystem::path& path, const MeasurementSet& ms)
{
    write_raw(path, ms.y.data(), static_cast<std::size_t>(ms.y.size()));
    json meta{{"dtype", "f64le"},
              {"length", ms.y.size()},
              {"epsilon", ms.epsilon},
              {"snr_db", snr_json(ms.snr_db)},
              {"operator", descriptor_json(ms.descriptor)}};
    if (ms.epsilon_bound) meta["epsilon_bound"] = *ms.epsilon_bound;
    write_json(sidecar(path), meta);
}

inline MeasurementSet read_measurements(const std::filesystem::path& path)
{
    const json meta = read_json(sidecar(path));
    MeasurementSet ms;
    try {
        const auto n = meta.at("length").get<std::size_t>();
        auto raw = read_raw(path, n);
        ms.y = Eigen::Map<const Vec>(raw.data(), static_cast<Index>(n));
        ms.epsilon = meta.at("epsilon").get<double>();
        ms.snr_db = snr_from_json(meta.at("snr_db"));
        if (meta.contains("epsilon_bound")) ms.epsilon_bound = meta.at("epsilon_bound").get<double>();
        ms.descriptor = descriptor_from_json(meta.at("operator"));
    } catch (const json::exception& e) {
        throw IoError(sidecar(path).string() + ": " + e.what());
    } catch (const InvalidArgument& e) {
        throw IoError(sidecar(path).string() + ": " + e.what());
    }
    return ms;
}

/// Rebuilds the sampling operator a MeasurementSet was acquired with.
/// Decorrelating descriptors need H.
inline SamplingOperator rebuild_operator(const OperatorDescriptor& d, const MixingMatrix* h = nullptr)
{
    switch (d.scheme) {
    case Scheme::dense: return SamplingOperator::dense(d.kind, d.m_hat, d.n1, d.n2, d.seed);
    case Scheme::uniform: return SamplingOperator::uniform(CoreOperator(d.kind, d.m_hat, d.n1, d.seed), d.n2);
    case Scheme::decorrelating:
        if (!h) throw InvalidArgument("rebuild_operator: decorrelating operator needs the spectra");
        csskit::detail::require_dims(h->channels() == d.n2, "rebuild_operator: spectra channel count != n2");
        return SamplingOperator::decorrelating(CoreOperator(d.kind, d.m_hat, d.n1, d.seed), *h);
    }
    throw InvalidArgument("rebuild_operator: unknown scheme");
}

} // namespace csskit::io
