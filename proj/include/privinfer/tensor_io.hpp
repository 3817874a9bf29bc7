#pragma once

// Decimal CSV tensors:
//   rows,cols,ell,scale
//   2,3,32,12
//   0.5,-1.25,3
//   ...
// Values are reals; they are encoded with floor(x * 2^scale) on load.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/fixed_ring.hpp"

namespace privinfer {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

inline bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace detail

inline RingTensor read_tensor_csv(std::istream& in) {
  std::string line;
  if (!detail::next_content_line(in, line)) throw std::invalid_argument("tensor csv: empty input");
  auto cells = detail::split_csv(line);
  // The column-name line is optional.
  if (!cells.empty() && cells[0] == "rows") {
    if (!detail::next_content_line(in, line)) throw std::invalid_argument("tensor csv: missing header values");
    cells = detail::split_csv(line);
  }
  if (cells.size() != 4) throw std::invalid_argument("tensor csv: header must be rows,cols,ell,scale");
  const std::size_t rows = std::stoul(cells[0]);
  const std::size_t cols = std::stoul(cells[1]);
  RingParams p{std::stoi(cells[2]), std::stoi(cells[3])};
  p.validate();
  std::vector<double> values;
  values.reserve(rows * cols);
  while (detail::next_content_line(in, line)) {
    for (const auto& c : detail::split_csv(line)) {
      if (!c.empty()) values.push_back(std::stod(c));
    }
  }
  if (values.size() != rows * cols) {
    throw std::invalid_argument("tensor csv: expected " + std::to_string(rows * cols) + " values, got " +
                                std::to_string(values.size()));
  }
  return RingTensor::from_reals(p, rows, cols, values);
}

inline RingTensor load_tensor_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tensor " + path);
  return read_tensor_csv(in);
}

inline void write_tensor_csv(std::ostream& out, const RingTensor& t) {
  out << "rows,cols,ell,scale\n" << t.rows << ',' << t.cols << ',' << t.params.ell << ',' << t.params.scale << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) {
      if (c) out << ',';
      out << decode_real(t.at(r, c), t.params);
    }
    out << '\n';
  }
}

inline void save_tensor_csv(const std::string& path, const RingTensor& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write tensor " + path);
  write_tensor_csv(out, t);
}

}  // namespace privinfer
