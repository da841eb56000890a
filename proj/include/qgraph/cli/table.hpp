// Column-named result tables with CSV and JSON renderings.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "qgraph/csv.hpp"

namespace qgraph::cli {

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  Table() = default;
  explicit Table(std::initializer_list<std::string> cols) : columns(cols) {}

  template <typename... Ts>
  void add(const Ts&... values) {
    std::vector<Cell> row;
    (row.push_back(to_cell(values)), ...);
    rows.push_back(std::move(row));
  }

 private:
  template <typename T>
  static Cell to_cell(const T& v) {
    if constexpr (std::is_floating_point_v<T>) return static_cast<double>(v);
    else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) return static_cast<std::int64_t>(v);
    else if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
    else return std::string(v);
  }
};

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) out += format_real(v);
            else if constexpr (std::is_same_v<V, std::int64_t>) out += std::to_string(v);
            else out += v;
          },
          row[i]);
    }
    out += '\n';
  }
  return out;
}

/// Array of row objects; non-finite numbers become null.
inline std::string to_json(const Table& t) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size() && i < t.columns.size(); ++i)
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) {
              if (std::isfinite(v)) obj[t.columns[i]] = v;
              else obj[t.columns[i]] = nullptr;
            } else {
              obj[t.columns[i]] = v;
            }
          },
          row[i]);
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + "\n";
}

}  // namespace qgraph::cli
