#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace medeq {

// 17 significant digits: enough to round-trip any double, few enough to stay
// byte-stable across platforms with correct rounding. All artifact floats go
// through here so repeated runs diff clean.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Plot-ready CSV with optional '# key = value' provenance lines before the
// header row. Writes are buffered in memory and flushed on close so a failed
// run never leaves a truncated artifact behind.
class CsvWriter {
 public:
  explicit CsvWriter(std::string path) : path_(std::move(path)) {}

  void provenance(const std::string& key, const std::string& value) {
    if (header_written_)
      throw std::logic_error("CsvWriter: provenance must precede the header");
    body_ += "# " + key + " = " + value + "\n";
  }
  void provenance(const std::string& key, double value) {
    provenance(key, fmt17(value));
  }
  void provenance(const std::string& key, long value) {
    provenance(key, std::to_string(value));
  }

  void header(const std::vector<std::string>& columns) {
    if (header_written_) throw std::logic_error("CsvWriter: header written twice");
    if (columns.empty()) throw std::logic_error("CsvWriter: empty header");
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) body_ += ',';
      body_ += columns[i];
    }
    body_ += '\n';
    header_written_ = true;
  }

  void cell(const std::string& v) {
    if (!row_open_)
      row_open_ = true;
    else
      body_ += ',';
    body_ += v;
  }
  void cell(double v) { cell(fmt17(v)); }
  void cell(long v) { cell(std::to_string(v)); }
  void cell(int v) { cell(std::to_string(static_cast<long>(v))); }

  void end_row() {
    if (!header_written_) throw std::logic_error("CsvWriter: row before header");
    body_ += '\n';
    row_open_ = false;
  }

  void close() {
    if (closed_) return;
    if (row_open_) throw std::logic_error("CsvWriter: unterminated row");
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw std::runtime_error("CsvWriter: cannot open " + path_);
    out.write(body_.data(), (std::streamsize)body_.size());
    if (!out) throw std::runtime_error("CsvWriter: write failed for " + path_);
    closed_ = true;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string body_;
  bool header_written_ = false;
  bool row_open_ = false;
  bool closed_ = false;
};

}  // namespace medeq
