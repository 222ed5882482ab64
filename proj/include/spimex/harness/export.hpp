#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spimex/grid.hpp"

namespace spimex::harness {

struct Column {
  std::string name;
  std::string unit;
};

/// Rectangular numeric series together with the provenance written into the header.
struct Series {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<Column> columns;
  std::vector<std::vector<double>> rows;
  /// Extra `# key: value` header lines, written after seed and hash.
  std::vector<std::pair<std::string, std::string>> notes;

  void add_row(std::vector<double> row);
};

/// Writes `#`-prefixed header lines (seed, config hash, notes, column names and
/// units, and a single `# written:` timestamp line) followed by a comma
/// separated header row and one line per row at 17 significant digits.
/// Throws std::runtime_error carrying the system error text on IO failure.
void export_csv(const Series& series, const std::filesystem::path& path);

struct CsvContent {
  std::vector<std::string> header_lines;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> rows;
};

CsvContent read_csv(const std::filesystem::path& path);

/// 16-bit binary PGM. Node (i, j) becomes pixel column i of image row
/// n - 1 - j so that y increases upwards. Values are mapped linearly onto
/// 0..65535 between the recorded min and max, both written in the header.
void export_heatmap(const GridField& field, const std::filesystem::path& path, const std::string& label = "");

struct Heatmap {
  int width = 0;
  int height = 0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::uint16_t> pixels;  // row-major, top row first

  /// Reconstructs node values; each is within (max - min) / 131070 of the original.
  GridField to_field(const GridSpec& spec) const;
};

Heatmap read_heatmap(const std::filesystem::path& path);

}  // namespace spimex::harness
