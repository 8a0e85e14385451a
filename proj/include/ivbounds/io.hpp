#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ivbounds/bounds.hpp"
#include "ivbounds/dataset.hpp"
#include "ivbounds/errors.hpp"

namespace ivbounds::io {

// Shortest decimal form that parses back to the same double, so written
// files are deterministic and round trips are exact.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[32];
    std::snprintf(probe, sizeof probe, "%.*g", prec, v);
    back = std::strtod(probe, nullptr);
    if (back == v) return probe;
  }
  return buf;
}

inline std::string read_text(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open " + path + ": " + std::strerror(errno));
  std::string out;
  char buf[1 << 14];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, got);
  const bool bad = std::ferror(f) != 0;
  std::fclose(f);
  if (bad) throw DataError("read failed on " + path);
  return out;
}

// Write through a sibling temp file and rename into place, so a crash never
// leaves a half-written output and concurrent readers see old or new only.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f)
    throw DataError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  const std::size_t put = std::fwrite(content.data(), 1, content.size(), f);
  const bool bad = put != content.size() || std::fclose(f) != 0;
  if (bad) {
    std::remove(tmp.c_str());
    throw DataError("write failed on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw DataError("cannot move " + tmp.string() + " into place: " + ec.message());
  }
}

namespace detail {

inline void chomp(std::string& line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
    line.pop_back();
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(const std::string& s, std::size_t lineno,
                           const char* what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError("line " + std::to_string(lineno) + ": bad " + what + " '" +
                    s + "'");
  return v;
}

}  // namespace detail

// Observations as rows y,d,z with the instrument stored by value; the
// support is rebuilt from the distinct z entries.
inline data::Sample read_sample_csv(const std::string& path) {
  const std::string text = read_text(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw DataError(path + ": empty file");

  detail::chomp(lines[0]);
  if (lines[0] != "y,d,z")
    throw DataError(path + ": expected header 'y,d,z', got '" + lines[0] + "'");

  struct Row {
    double y, z;
    int d;
  };
  std::vector<Row> rows;
  std::set<double> zs;
  rows.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    detail::chomp(lines[i]);
    if (lines[i].empty()) continue;
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != 3)
      throw DataError(path + ": line " + std::to_string(i + 1) +
                      ": expected 3 fields, got " + std::to_string(f.size()));
    Row r;
    r.y = detail::parse_double(f[0], i + 1, "outcome");
    if (f[1] != "0" && f[1] != "1")
      throw DataError(path + ": line " + std::to_string(i + 1) +
                      ": treatment must be 0 or 1, got '" + f[1] + "'");
    r.d = f[1] == "1" ? 1 : 0;
    r.z = detail::parse_double(f[2], i + 1, "instrument");
    rows.push_back(r);
    zs.insert(r.z);
  }
  if (rows.empty()) throw DataError(path + ": no observations");

  data::Sample s;
  s.support.levels.assign(zs.begin(), zs.end());
  s.obs.reserve(rows.size());
  for (const Row& r : rows) {
    const auto it = zs.find(r.z);
    const auto idx =
        static_cast<std::size_t>(std::distance(zs.begin(), it));
    s.obs.push_back({r.y, r.d, idx});
  }
  return s;
}

inline void write_sample_csv(const std::string& path, const data::Sample& s) {
  std::string out = "y,d,z\n";
  for (const auto& o : s.obs) {
    out += format_double(o.y);
    out += o.d == 1 ? ",1," : ",0,";
    out += format_double(s.support.levels[o.z]);
    out += '\n';
  }
  write_text_atomic(path, out);
}

// Plot-ready envelope table; raw columns keep nan at failed points while the
// shaped columns carry the vacuous fallback that entered the envelope.
inline std::string curve_csv(const bounds::BoundCurve& c,
                             const std::vector<double>* truth = nullptr) {
  std::string out = truth == nullptr
                        ? "y,raw_lower,raw_upper,lower,upper,feasible_lower,"
                          "feasible_upper,crossing\n"
                        : "y,true,raw_lower,raw_upper,lower,upper,feasible_"
                          "lower,feasible_upper,crossing\n";
  for (std::size_t i = 0; i < c.y.size(); ++i) {
    out += format_double(c.y[i]);
    if (truth != nullptr) {
      out += ',';
      out += format_double((*truth)[i]);
    }
    out += ',';
    out += format_double(c.raw_lower[i]);
    out += ',';
    out += format_double(c.raw_upper[i]);
    out += ',';
    out += format_double(c.lower[i]);
    out += ',';
    out += format_double(c.upper[i]);
    out += c.feasible_lower[i] ? ",1" : ",0";
    out += c.feasible_upper[i] ? ",1" : ",0";
    out += c.crossing[i] ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace ivbounds::io
