#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "qvae/error.hpp"

namespace qvae {

/// One row of an estimate report. `index` is a site, a pair "i-j", a block
/// length or empty; `source` is exact, mps-samples or vae-samples.
struct ReportRow {
  std::string observable;
  double field = 0.0;
  std::string index;
  double value = 0.0;
  double std_error = 0.0;
  std::string source;
  std::size_t count = 0;
};

// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

class Report {
 public:
  void add(ReportRow r) { rows_.push_back(std::move(r)); }
  const std::vector<ReportRow>& rows() const { return rows_; }

  std::string csv() const {
    std::string out = "observable,h,site/pair,value,std_error,source,K\n";
    for (const auto& r : rows_) {
      out += r.observable + "," + format_double(r.field) + "," + r.index + "," + format_double(r.value) + "," +
             format_double(r.std_error) + "," + r.source + "," + std::to_string(r.count) + "\n";
    }
    return out;
  }

  void write(const std::string& path) const { write_text(path, csv()); }

  static void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw ConfigError("write failed for " + path);
  }

 private:
  std::vector<ReportRow> rows_;
};

}  // namespace qvae
