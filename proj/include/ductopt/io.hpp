#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ductopt {

// Shortest decimal representation that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[32];
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double parsed = 0;
  std::sscanf(buf, "%lf", &parsed);
  if (parsed == v)
    for (int prec = 1; prec < 17; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &parsed);
      if (parsed == v) return shorter;
    }
  return buf;
}

struct DesignFile {
  int n_z = 0, n_r = 0;
  double epsilon = 0;
  Eigen::VectorXd values;  // row-major, z index fastest
};

// Plain-text design format: header line "n_z n_r epsilon", then one density
// per line in row-major order with z fastest.
inline void write_design(const std::string& path, int n_z, int n_r,
                         double epsilon, const Eigen::VectorXd& values) {
  if (values.size() != static_cast<long>(n_z) * n_r)
    throw std::invalid_argument("write_design: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << n_z << ' ' << n_r << ' ' << format_double(epsilon) << '\n';
  for (long i = 0; i < values.size(); ++i)
    out << format_double(values[i]) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline DesignFile read_design(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open design file: " + path);
  DesignFile df;
  if (!(in >> df.n_z >> df.n_r >> df.epsilon))
    throw std::runtime_error("malformed design header in " + path);
  if (df.n_z <= 0 || df.n_r <= 0)
    throw std::runtime_error("non-positive design dimensions in " + path);
  df.values.resize(static_cast<long>(df.n_z) * df.n_r);
  for (long i = 0; i < df.values.size(); ++i)
    if (!(in >> df.values[i]))
      throw std::runtime_error("design file " + path + " truncated at entry " +
                               std::to_string(i));
  return df;
}

// Minimal CSV writer: LF endings, full-precision floats.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    out_ << header << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  static std::string cell(double v) {
    return std::isnan(v) ? std::string() : format_double(v);
  }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }

 private:
  std::ofstream out_;
};

// Grayscale render of the design grid (PGM, one pixel per element; dense
// material dark, air light; top row = outermost radius).
inline void write_pgm(const std::string& path, int n_z, int n_r,
                      const Eigen::VectorXd& values) {
  if (values.size() != static_cast<long>(n_z) * n_r)
    throw std::invalid_argument("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P2\n" << n_z << ' ' << n_r << "\n255\n";
  for (int j = n_r - 1; j >= 0; --j) {
    for (int i = 0; i < n_z; ++i) {
      const double a = std::min(1.0, std::max(0.0, values[j * n_z + i]));
      out << static_cast<int>(std::lround(255.0 * (1.0 - a)));
      out << (i + 1 == n_z ? '\n' : ' ');
    }
  }
}

}  // namespace ductopt
