#include "nnqf/csv.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace nnqf::csv {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

bool Reader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (!std::getline(in_, line_)) return false;
  if (!line_.empty() && line_.back() == '\r') line_.pop_back();
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line_.size(); ++i) {
    const char ch = line_[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line_.size() && line_[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delimiter_) {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  fields.push_back(std::move(field));
  return true;
}

}  // namespace nnqf::csv
