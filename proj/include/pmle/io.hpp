#ifndef PMLE_IO_HPP
#define PMLE_IO_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pmle/config.hpp"
#include "pmle/errors.hpp"
#include "pmle/model.hpp"

namespace pmle::io {

// Numbers are written with 17 significant digits so emitted files round-trip
// to the exact double.
inline std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

// Writes via a sibling temp file and renames into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// step, theta components, running theta_bar components. theta_bar is nan
// until the first post-burn-in step has been recorded.
inline std::string theta_trace_csv(const Trace& trace, long burn_in) {
  const Index dt = trace.theta_path.cols();
  std::ostringstream out;
  out << "step";
  for (Index j = 0; j < dt; ++j) out << ",theta_" << j;
  for (Index j = 0; j < dt; ++j) out << ",theta_bar_" << j;
  out << "\n";

  Vector running = Vector::Zero(dt);
  long averaged = 0;
  for (Index k = 0; k < trace.theta_path.rows(); ++k) {
    out << (k + 1);
    for (Index j = 0; j < dt; ++j) out << "," << format_double(trace.theta_path(k, j));
    if (k + 1 > burn_in) {
      ++averaged;
      running += (trace.theta_path.row(k).transpose() - running) / static_cast<double>(averaged);
      for (Index j = 0; j < dt; ++j) out << "," << format_double(running[j]);
    } else {
      for (Index j = 0; j < dt; ++j) out << ",nan";
    }
    out << "\n";
  }
  return out.str();
}

// Plot-ready raw samples: one particle per row, no header.
inline std::string cloud_csv(const Matrix& cloud) {
  std::ostringstream out;
  for (Index i = 0; i < cloud.rows(); ++i) {
    for (Index j = 0; j < cloud.cols(); ++j) {
      if (j > 0) out << ",";
      out << format_double(cloud(i, j));
    }
    out << "\n";
  }
  return out.str();
}

struct ParsedCsv {
  std::vector<std::string> header;  // empty when the file has no header row
  Matrix values;
};

// Parses a numeric CSV; a non-numeric first row is treated as the header.
inline ParsedCsv parse_csv(const std::string& contents) {
  ParsedCsv parsed;
  std::vector<std::vector<double>> rows;
  std::istringstream stream(contents);
  std::string line;
  long line_number = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);

    bool numeric = true;
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (used != f.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (line_number == 1) {
        parsed.header = fields;
        continue;
      }
      throw DataError("non-numeric CSV field", line_number);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    parsed.values.resize(0, 0);
    return parsed;
  }
  parsed.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw DataError("ragged CSV row", static_cast<long>(i + 1));
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      parsed.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return parsed;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace pmle::io

#endif  // PMLE_IO_HPP
