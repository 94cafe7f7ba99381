#pragma once

#include <istream>
#include <string>
#include <vector>

namespace nnqf::csv {

std::string trim(const std::string& s);

/// Shortest text that parses back to the same double (at most 17 significant digits).
std::string format_double(double v);

/// Minimal delimiter-separated reader. Handles double-quoted fields with
/// embedded delimiters; quotes inside quoted fields are written as "".
class Reader {
public:
  Reader(std::istream& in, char delimiter) : in_(in), delimiter_(delimiter) {}

  bool next(std::vector<std::string>& fields);

private:
  std::istream& in_;
  char delimiter_;
  std::string line_;
};

}  // namespace nnqf::csv
