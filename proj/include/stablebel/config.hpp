#pragma once

// Flat key=value run configuration. Keys may carry dotted prefixes
// (drift.kappa = 1.0); '#' starts a comment; blank lines are ignored.
// Vectors are comma-separated, matrix rows are separated by ';'.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stablebel/error.hpp"

namespace stablebel {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(key, "expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw InvalidArgument(key, "expected a number, got '" + text + "'");
  return v;
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(std::istream& in) {
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw InvalidArgument("line " + std::to_string(line_no), "expected key=value");
      const auto key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw InvalidArgument("line " + std::to_string(line_no), "empty key");
      cfg.values_[key] = detail::trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static RunConfig parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("config", "cannot open '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw InvalidArgument(key, "missing required key");
    return it->second;
  }

  std::string get_string(const std::string& key) const { return raw(key); }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  double get_double(const std::string& key) const { return detail::parse_double(key, raw(key)); }
  double get_double(const std::string& key, double fallback) const { return has(key) ? get_double(key) : fallback; }

  std::uint64_t get_uint(const std::string& key) const {
    const auto& text = raw(key);
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument(key, "expected a nonnegative integer, got '" + text + "'");
    try {
      return std::stoull(text);
    } catch (const std::exception&) {
      throw InvalidArgument(key, "integer out of range");
    }
  }
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_uint(key) : fallback;
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& part : detail::split(raw(key), ',')) out.push_back(detail::parse_double(key, part));
    return out;
  }

  Eigen::VectorXd get_vector(const std::string& key) const {
    const auto v = get_list(key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  /// Vector of length `dim`; a single value is broadcast.
  Eigen::VectorXd get_vector(const std::string& key, Eigen::Index dim) const {
    auto v = get_vector(key);
    if (v.size() == 1 && dim > 1) return Eigen::VectorXd::Constant(dim, v(0));
    if (v.size() != dim) throw InvalidArgument(key, "expected " + std::to_string(dim) + " entries");
    return v;
  }

  Eigen::MatrixXd get_matrix(const std::string& key) const {
    const auto rows = detail::split(raw(key), ';');
    Eigen::MatrixXd m;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::vector<double> vals;
      for (const auto& part : detail::split(rows[r], ',')) vals.push_back(detail::parse_double(key, part));
      if (r == 0) m.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(vals.size()));
      if (static_cast<Eigen::Index>(vals.size()) != m.cols()) throw InvalidArgument(key, "ragged matrix rows");
      for (std::size_t c = 0; c < vals.size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vals[c];
    }
    return m;
  }

  /// Sorted key=value lines; the basis of the config hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  /// 64-bit FNV-1a of the canonical form.
  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stablebel
