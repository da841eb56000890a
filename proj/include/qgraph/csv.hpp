// Minimal CSV writer: comma separated, '.' decimal, LF line endings.
#pragma once

#include <cstdio>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace qgraph {

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, std::initializer_list<std::string_view> header) : os_(os) {
    bool first = true;
    for (auto h : header) {
      if (!first) os_ << ',';
      os_ << h;
      first = false;
    }
    os_ << '\n';
  }

  template <typename... Ts>
  void row(const Ts&... fields) {
    bool first = true;
    ((put(fields, first)), ...);
    os_ << '\n';
  }

 private:
  template <typename T>
  void put(const T& v, bool& first) {
    if (!first) os_ << ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>) os_ << format_real(static_cast<double>(v));
    else os_ << v;
  }

  std::ostream& os_;
};

}  // namespace qgraph
