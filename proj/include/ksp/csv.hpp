#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ksp/types.hpp"

namespace ksp::csv {

/// Shortest representation that parses back to the identical double.
std::string format(double v);
double parse(const std::string& s);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};

/// Writes header and rows with ',' separators and LF line endings.
void write(std::ostream& os, const std::vector<std::string>& header, const Mat& rows);
Table read(std::istream& is);

std::vector<std::string> numbered(const std::string& prefix, std::size_t n);

}  // namespace ksp::csv
