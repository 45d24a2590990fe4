#include "spherest/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <system_error>

#include "spherest/errors.hpp"

namespace spherest::io {

namespace {

constexpr const char* kSpheroidHeader = "cx,cy,cz,ax,ay,az,a,c";
constexpr const char* kEllipseHeader = "id,x,y,A,C,S,alpha";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

double parse_double(const std::string& field, long line_no, int column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty())
    throw DataError("line " + std::to_string(line_no) + ": invalid number '" +
                    field + "' in column " + std::to_string(column));
  return value;
}

// Iterates data lines of a CSV text: header checked on line 1, blank lines
// skipped, fields handed to `row` with the 1-based line number.
void for_each_row(const std::string& text, const char* header, int n_fields,
                  const std::function<void(const std::vector<std::string>&, long)>& row) {
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!header_seen) {
      if (t != header)
        throw DataError("line " + std::to_string(line_no) +
                        ": expected header '" + std::string(header) + "'");
      header_seen = true;
      continue;
    }
    const std::vector<std::string> fields = split_fields(t);
    if (static_cast<int>(fields.size()) != n_fields)
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(n_fields) + " fields, got " +
                      std::to_string(fields.size()));
    row(fields, line_no);
  }
  if (!header_seen) throw DataError("empty file: missing header");
}

std::string with_path(const std::string& path, const DataError& e) {
  return path + ": " + e.what();
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp + " to " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_spheroids_csv(const std::vector<simulate::Spheroid>& spheroids) {
  std::string out(kSpheroidHeader);
  out += '\n';
  for (const simulate::Spheroid& sp : spheroids) {
    out += format_double(sp.center.x()) + ',' + format_double(sp.center.y()) +
           ',' + format_double(sp.center.z()) + ',' + format_double(sp.axis.x()) +
           ',' + format_double(sp.axis.y()) + ',' + format_double(sp.axis.z()) +
           ',' + format_double(sp.a) + ',' + format_double(sp.c) + '\n';
  }
  return out;
}

std::vector<simulate::Spheroid> parse_spheroids_csv(const std::string& text) {
  std::vector<simulate::Spheroid> out;
  for_each_row(text, kSpheroidHeader, 8,
               [&](const std::vector<std::string>& f, long line_no) {
                 simulate::Spheroid sp;
                 sp.center = {parse_double(f[0], line_no, 1),
                              parse_double(f[1], line_no, 2),
                              parse_double(f[2], line_no, 3)};
                 sp.axis = {parse_double(f[3], line_no, 4),
                            parse_double(f[4], line_no, 5),
                            parse_double(f[5], line_no, 6)};
                 sp.a = parse_double(f[6], line_no, 7);
                 sp.c = parse_double(f[7], line_no, 8);
                 const double norm = sp.axis.norm();
                 if (std::abs(norm - 1.0) > 1e-6)
                   throw DataError("line " + std::to_string(line_no) +
                                   ": axis is not a unit vector");
                 sp.axis /= norm;
                 if (!(sp.c > 0.0) || !(sp.a >= sp.c))
                   throw DataError("line " + std::to_string(line_no) +
                                   ": need a >= c > 0");
                 out.push_back(sp);
               });
  return out;
}

void write_spheroids_csv(const std::string& path,
                         const std::vector<simulate::Spheroid>& spheroids) {
  atomic_write_text(path, format_spheroids_csv(spheroids));
}

std::vector<simulate::Spheroid> read_spheroids_csv(const std::string& path) {
  try {
    return parse_spheroids_csv(read_text(path));
  } catch (const DataError& e) {
    throw DataError(with_path(path, e));
  }
}

std::string format_ellipses_csv(
    const std::vector<sectioning::SectionEllipse>& ellipses) {
  std::string out(kEllipseHeader);
  out += '\n';
  long id = 0;
  for (const sectioning::SectionEllipse& e : ellipses) {
    out += std::to_string(++id) + ',' + format_double(e.center2.x()) + ',' +
           format_double(e.center2.y()) + ',' + format_double(e.A) + ',' +
           format_double(e.C) + ',' + format_double(e.S) + ',' +
           format_double(e.alpha) + '\n';
  }
  return out;
}

std::vector<sectioning::SectionEllipse> parse_ellipses_csv(const std::string& text) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  std::vector<sectioning::SectionEllipse> out;
  for_each_row(text, kEllipseHeader, 7,
               [&](const std::vector<std::string>& f, long line_no) {
                 sectioning::SectionEllipse e;
                 parse_double(f[0], line_no, 1);  // id: format check only
                 e.center2 = {parse_double(f[1], line_no, 2),
                              parse_double(f[2], line_no, 3)};
                 e.A = parse_double(f[3], line_no, 4);
                 e.C = parse_double(f[4], line_no, 5);
                 e.S = parse_double(f[5], line_no, 6);
                 e.alpha = parse_double(f[6], line_no, 7);
                 if (!(e.C > 0.0) || !(e.A >= e.C))
                   throw DataError("line " + std::to_string(line_no) +
                                   ": need A >= C > 0");
                 if (!(e.S > 0.0 && e.S <= 1.0) ||
                     std::abs(e.S - e.C / e.A) > 1e-6)
                   throw DataError("line " + std::to_string(line_no) +
                                   ": S inconsistent with C/A");
                 if (!(e.alpha >= -1e-9 && e.alpha <= kHalfPi + 1e-9))
                   throw DataError("line " + std::to_string(line_no) +
                                   ": alpha outside [0, pi/2]");
                 e.alpha = std::clamp(e.alpha, 0.0, kHalfPi);
                 out.push_back(e);
               });
  return out;
}

void write_ellipses_csv(const std::string& path,
                        const std::vector<sectioning::SectionEllipse>& ellipses) {
  atomic_write_text(path, format_ellipses_csv(ellipses));
}

std::vector<sectioning::SectionEllipse> read_ellipses_csv(const std::string& path) {
  try {
    return parse_ellipses_csv(read_text(path));
  } catch (const DataError& e) {
    throw DataError(with_path(path, e));
  }
}

std::string format_histogram_csv(const unfold::Histogram3D& h) {
  std::string out("i,j,k,value\n");
  for (int i = 0; i < h.binning.n_c; ++i)
    for (int j = 0; j < h.binning.n_s; ++j)
      for (int k = 0; k < h.binning.n_theta; ++k)
        out += std::to_string(i) + ',' + std::to_string(j) + ',' +
               std::to_string(k) + ',' +
               format_double(h.values[h.binning.flat_index(i, j, k)]) + '\n';
  return out;
}

void write_histogram_csv(const std::string& path, const unfold::Histogram3D& h) {
  atomic_write_text(path, format_histogram_csv(h));
}

}  // namespace spherest::io
