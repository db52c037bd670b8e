#include "mqf/panel_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace mqf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& what) {
  throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

long parse_index(const std::string& s, const std::string& path, std::size_t line) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail_at(path, line, "invalid integer index '" + s + "'");
  if (v < 1) fail_at(path, line, "index must be >= 1");
  return v;
}

double parse_value(const std::string& s, const std::string& path, std::size_t line) {
  if (s.empty()) fail_at(path, line, "empty value");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) fail_at(path, line, "invalid number '" + s + "'");
  if (!std::isfinite(v)) fail_at(path, line, "non-finite value");
  return v;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw IoError(path + ": cannot open for writing");
  return os;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError(path + ": cannot open for reading");
  return is;
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffULL) << (8 * (7 - b));
    return r;
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

MatrixPanel read_long_csv(const std::string& path, std::optional<PanelDims> dims) {
  std::ifstream is = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  struct Entry {
    long t, i, j;
    double v;
    std::size_t line;
  };
  std::vector<Entry> entries;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty()) continue;
    const auto fields = split_commas(s);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"t", "i", "j", "value"})
        fail_at(path, line_no, "expected header 't,i,j,value'");
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) fail_at(path, line_no, "expected 4 fields");
    entries.push_back({parse_index(fields[0], path, line_no), parse_index(fields[1], path, line_no),
                       parse_index(fields[2], path, line_no), parse_value(fields[3], path, line_no), line_no});
    if (dims) {
      const Entry& e = entries.back();
      if (e.t > dims->T || e.i > dims->p1 || e.j > dims->p2)
        fail_at(path, line_no, "index outside declared dimensions");
    }
  }
  if (!header_seen) throw IoError(path + ":1: missing header 't,i,j,value'");
  if (entries.empty()) throw IoError(path + ": no observations");
  PanelDims d{0, 0, 0};
  if (dims) {
    d = *dims;
  } else {
    for (const Entry& e : entries) {
      d.T = std::max<int>(d.T, static_cast<int>(e.t));
      d.p1 = std::max<int>(d.p1, static_cast<int>(e.i));
      d.p2 = std::max<int>(d.p2, static_cast<int>(e.j));
    }
  }
  std::vector<Eigen::MatrixXd> values(d.T, Eigen::MatrixXd::Zero(d.p1, d.p2));
  std::vector<Mask> masks(d.T, Mask::Constant(d.p1, d.p2, false));
  for (const Entry& e : entries) {
    auto m = masks[e.t - 1](e.i - 1, e.j - 1);
    if (m) fail_at(path, e.line, "duplicate entry (t,i,j)");
    masks[e.t - 1](e.i - 1, e.j - 1) = true;
    values[e.t - 1](e.i - 1, e.j - 1) = e.v;
  }
  try {
    return MatrixPanel(std::move(values), std::move(masks));
  } catch (const std::exception& ex) {
    throw IoError(path + ": " + ex.what());
  }
}

void write_long_csv(const std::string& path, const MatrixPanel& panel) {
  std::ofstream os = open_out(path);
  os << "t,i,j,value\n";
  for (int t = 0; t < panel.T(); ++t)
    for (int i = 0; i < panel.p1(); ++i)
      for (int j = 0; j < panel.p2(); ++j)
        if (panel.observed(t, i, j))
          os << t + 1 << ',' << i + 1 << ',' << j + 1 << ',' << format_double(panel.slice(t)(i, j))
             << '\n';
  if (!os) throw IoError(path + ": write failed");
}

std::string dense_sidecar(const std::string& path) { return path + ".json"; }

MatrixPanel read_dense(const std::string& path) {
  PanelDims d{};
  {
    const std::string side = dense_sidecar(path);
    std::ifstream js = open_in(side);
    nlohmann::json j;
    try {
      js >> j;
      d = {j.at("T").get<int>(), j.at("p1").get<int>(), j.at("p2").get<int>()};
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(side + ": invalid descriptor: " + ex.what());
    }
    if (d.T < 1 || d.p1 < 1 || d.p2 < 1) throw IoError(side + ": dimensions must be positive");
  }
  std::ifstream is = open_in(path, true);
  const std::size_t n = static_cast<std::size_t>(d.T) * d.p1 * d.p2;
  std::vector<std::uint64_t> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 8));
  if (static_cast<std::size_t>(is.gcount()) != n * 8)
    throw IoError(path + ": expected " + std::to_string(n * 8) + " bytes");
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes");
  std::vector<Eigen::MatrixXd> values(d.T, Eigen::MatrixXd(d.p1, d.p2));
  std::vector<Mask> masks(d.T, Mask::Constant(d.p1, d.p2, true));
  std::size_t k = 0;
  for (int t = 0; t < d.T; ++t)
    for (int i = 0; i < d.p1; ++i)
      for (int j = 0; j < d.p2; ++j) {
        const std::uint64_t bits = to_little(raw[k++]);
        double v;
        std::memcpy(&v, &bits, 8);
        if (std::isnan(v)) {
          masks[t](i, j) = false;
          v = 0.0;
        } else if (!std::isfinite(v)) {
          throw IoError(path + ": non-finite value at entry " + std::to_string(k));
        }
        values[t](i, j) = v;
      }
  try {
    return MatrixPanel(std::move(values), std::move(masks));
  } catch (const std::exception& ex) {
    throw IoError(path + ": " + ex.what());
  }
}

void write_dense(const std::string& path, const MatrixPanel& panel) {
  {
    std::ofstream os = open_out(path, true);
    for (int t = 0; t < panel.T(); ++t)
      for (int i = 0; i < panel.p1(); ++i)
        for (int j = 0; j < panel.p2(); ++j) {
          const double v = panel.observed(t, i, j) ? panel.slice(t)(i, j)
                                                   : std::numeric_limits<double>::quiet_NaN();
          std::uint64_t bits;
          std::memcpy(&bits, &v, 8);
          bits = to_little(bits);
          os.write(reinterpret_cast<const char*>(&bits), 8);
        }
    if (!os) throw IoError(path + ": write failed");
  }
  std::ofstream js = open_out(dense_sidecar(path));
  js << nlohmann::json{{"T", panel.T()}, {"p1", panel.p1()}, {"p2", panel.p2()}}.dump() << '\n';
}

MatrixPanel read_panel(const std::string& path, std::optional<PanelDims> dims) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  if (csv) return read_long_csv(path, dims);
  MatrixPanel p = read_dense(path);
  if (dims && (dims->T != p.T() || dims->p1 != p.p1() || dims->p2 != p.p2()))
    throw IoError(path + ": dimensions disagree with the configuration");
  return p;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream os = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
  if (!os) throw IoError(path + ": write failed");
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream is = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string s = trim(line);
    if (s.empty()) continue;
    std::vector<double> row;
    for (const auto& f : split_commas(s)) row.push_back(parse_value(f, path, line_no));
    if (!rows.empty() && row.size() != rows.front().size())
      fail_at(path, line_no, "ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_factors_csv(const std::string& path, const std::vector<Eigen::MatrixXd>& F) {
  if (F.empty()) throw IoError(path + ": no factor matrices");
  Eigen::MatrixXd stacked(F.size() * F.front().rows(), F.front().cols());
  for (std::size_t t = 0; t < F.size(); ++t)
    stacked.middleRows(t * F.front().rows(), F.front().rows()) = F[t];
  write_matrix_csv(path, stacked);
}

std::vector<Eigen::MatrixXd> read_factors_csv(const std::string& path, int k1) {
  const Eigen::MatrixXd stacked = read_matrix_csv(path);
  if (k1 < 1 || stacked.rows() % k1 != 0)
    throw IoError(path + ": row count is not a multiple of k1");
  std::vector<Eigen::MatrixXd> F;
  for (Eigen::Index t = 0; t < stacked.rows() / k1; ++t) F.push_back(stacked.middleRows(t * k1, k1));
  return F;
}

}  // namespace mqf
