#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "glhad/types.hpp"

namespace glhad {

/// Locale-independent number formatting: '.' decimal point, no separators,
/// 17 significant digits (round-trip exact for doubles).
std::string format_double(double v);

/// Minimal CSV writer: fixed header, one row per call, deterministic output.
/// When `timestamp` is true the first line is `# written <ISO-8601 UTC>`;
/// suppress it for byte-identical reruns.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            bool timestamp = false);

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::size_t width_;
};

std::string cell(double v);
std::string cell(int v);
std::string cell(std::uint64_t v);
std::string cell(const std::string& v);

}  // namespace glhad
