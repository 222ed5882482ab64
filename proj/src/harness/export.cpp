#include "spimex/harness/export.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spimex::harness {

namespace {

[[noreturn]] void io_failure(const std::filesystem::path& path, const char* what) {
  throw std::runtime_error(std::string(what) + " " + path.string() + ": " + std::strerror(errno));
}

std::ofstream open_for_write(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, mode);
  if (!out) io_failure(path, "cannot open");
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void Series::add_row(std::vector<double> row) {
  if (row.size() != columns.size()) {
    throw std::invalid_argument("row has " + std::to_string(row.size()) + " values for " +
                                std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

void export_csv(const Series& series, const std::filesystem::path& path) {
  std::ofstream out = open_for_write(path);
  out << "# seed: " << series.seed << "\n";
  out << "# config_hash: " << series.config_hash << "\n";
  for (const auto& [key, value] : series.notes) out << "# " << key << ": " << value << "\n";
  out << "# columns:";
  for (const auto& c : series.columns) out << " " << c.name << " [" << (c.unit.empty() ? "1" : c.unit) << "]";
  out << "\n# written: " << utc_timestamp() << "\n";
  for (std::size_t k = 0; k < series.columns.size(); ++k) out << (k ? "," : "") << series.columns[k].name;
  out << "\n";
  for (const auto& row : series.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_value(row[k]);
    out << "\n";
  }
  out.flush();
  if (!out) io_failure(path, "write failed for");
}

CsvContent read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) io_failure(path, "cannot open");
  CsvContent content;
  bool have_names = false;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("#", 0) == 0) {
      content.header_lines.push_back(line);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!have_names) {
      content.column_names = std::move(cells);
      have_names = true;
      continue;
    }
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::stod(c));
    content.rows.push_back(std::move(row));
  }
  return content;
}

void export_heatmap(const GridField& field, const std::filesystem::path& path, const std::string& label) {
  const int n = static_cast<int>(field.n());
  const double lo = field.min(), hi = field.max();
  const double span = hi - lo;
  std::ofstream out = open_for_write(path, std::ios::out | std::ios::binary);
  out << "P5\n";
  if (!label.empty()) out << "# label " << label << "\n";
  out << "# min " << format_value(lo) << "\n# max " << format_value(hi) << "\n";
  out << "# value = min + (max - min) * pixel / 65535, rounding error <= (max - min) / 131070\n";
  out << n << " " << n << "\n65535\n";
  std::vector<unsigned char> bytes(2 * static_cast<std::size_t>(n) * n);
  std::size_t k = 0;
  for (int row = 0; row < n; ++row) {
    const int j = n - 1 - row;
    for (int i = 0; i < n; ++i) {
      const double t = span > 0.0 ? (field(i, j) - lo) / span : 0.0;
      const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
      bytes[k++] = static_cast<unsigned char>(q >> 8);
      bytes[k++] = static_cast<unsigned char>(q & 0xff);
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) io_failure(path, "write failed for");
}

Heatmap read_heatmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure(path, "cannot open");
  Heatmap map;
  std::string magic;
  std::getline(in, magic);
  if (magic != "P5") throw std::runtime_error(path.string() + ": not a binary PGM");
  std::vector<long> numbers;
  while (numbers.size() < 3) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": truncated header");
    if (line.rfind("# min ", 0) == 0) map.min = std::stod(line.substr(6));
    else if (line.rfind("# max ", 0) == 0) map.max = std::stod(line.substr(6));
    else if (line.rfind("#", 0) == 0) continue;
    else {
      std::stringstream ss(line);
      for (long v; ss >> v;) numbers.push_back(v);
    }
  }
  map.width = static_cast<int>(numbers[0]);
  map.height = static_cast<int>(numbers[1]);
  if (numbers[2] != 65535) throw std::runtime_error(path.string() + ": expected maxval 65535");
  std::vector<unsigned char> bytes(2 * static_cast<std::size_t>(map.width) * map.height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
  map.pixels.resize(bytes.size() / 2);
  for (std::size_t k = 0; k < map.pixels.size(); ++k) {
    map.pixels[k] = static_cast<std::uint16_t>((bytes[2 * k] << 8) | bytes[2 * k + 1]);
  }
  return map;
}

GridField Heatmap::to_field(const GridSpec& spec) const {
  if (spec.n != width || spec.n != height) throw SpecMismatch("heatmap size does not match the grid");
  GridField out(spec);
  for (int row = 0; row < height; ++row) {
    for (int i = 0; i < width; ++i) {
      out(i, height - 1 - row) = min + (max - min) * pixels[static_cast<std::size_t>(row) * width + i] / 65535.0;
    }
  }
  return out;
}

}  // namespace spimex::harness
