// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace visatb {

/// Formats a double with fixed precision (no locale surprises).
inline std::string format_fixed(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

/// Minimal aligned text table for CLI and report output. First column is
/// left-aligned, the rest right-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }

  std::string str() const {
    std::vector<std::size_t> width(header_.size(), 0);
    auto widen = [&](const std::vector<std::string>& row) {
      for (std::size_t c = 0; c < row.size() && c < width.size(); ++c)
        width[c] = std::max(width[c], row[c].size());
    };
    widen(header_);
    for (const auto& row : rows_) widen(row);

    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
      for (std::size_t c = 0; c < width.size(); ++c) {
        std::string_view cell = c < row.size() ? std::string_view(row[c]) : std::string_view();
        std::size_t pad = width[c] - cell.size();
        if (c == 0) {
          out += cell;
          out.append(pad, ' ');
        } else {
          out.append(pad, ' ');
          out += cell;
        }
        if (c + 1 < width.size()) out += "  ";
      }
      while (!out.empty() && out.back() == ' ') out.pop_back();
      out += '\n';
    };
    emit(header_);
    std::size_t total = 0;
    for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c + 1 < width.size() ? 2 : 0);
    out.append(total, '-');
    out += '\n';
    for (const auto& row : rows_) emit(row);
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Unit-interval bar for quick visual comparison in terminal reports.
/// Values are clamped to [0, hi]; width is the bar length at hi.
inline std::string bar(double value, double hi, std::size_t width = 24) {
  if (!(hi > 0.0)) hi = 1.0;
  double frac = value / hi;
  if (frac < 0.0) frac = 0.0;
  if (frac > 1.0) frac = 1.0;
  std::size_t fill = static_cast<std::size_t>(frac * static_cast<double>(width) + 0.5);
  std::string out(fill, '#');
  out.append(width - fill, '.');
  return out;
}

}  // namespace visatb
