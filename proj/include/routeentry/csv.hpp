#pragma once

#include "routeentry/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace routeentry::csv {

inline std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (in_quotes && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        in_quotes = !in_quotes;
      }
    } else if (c == ',' && !in_quotes) {
      fields.push_back(field);
      field.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // tolerate CRLF input
    } else {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

struct Row {
  std::size_t line_no = 0; // 1-based, header is line 1
  std::vector<std::string> fields;
};

class Table {
public:
  std::string path;
  std::vector<std::string> header;
  std::vector<Row> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw io_error(path + ": missing column '" + name + "'");
  }
};

inline Table read_table(const std::string& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open file");
  Table t;
  t.path = path;
  std::string line;
  if (!std::getline(in, line)) throw io_error(path + ": empty file, expected header row");
  t.header = split_line(line);
  for (auto& h : t.header) h = trim(h);
  if (!expected_header.empty()) {
    if (t.header.size() != expected_header.size()) {
      std::ostringstream msg;
      msg << path << ": header has " << t.header.size() << " columns, expected "
          << expected_header.size();
      throw io_error(msg.str());
    }
    for (std::size_t i = 0; i < expected_header.size(); ++i) {
      if (t.header[i] != expected_header[i]) {
        throw io_error(path + ": header column " + std::to_string(i + 1) + " is '" + t.header[i] +
                       "', expected '" + expected_header[i] + "'");
      }
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Row r;
    r.line_no = line_no;
    r.fields = split_line(line);
    if (r.fields.size() != t.header.size()) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": row has " << r.fields.size() << " fields, expected "
          << t.header.size();
      throw io_error(msg.str());
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline long long parse_int(const std::string& s, const std::string& path, std::size_t line_no,
                           const std::string& what) {
  const std::string v = trim(s);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw io_error(path + ":" + std::to_string(line_no) + ": non-integer " + what + " '" + s + "'");
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t line_no,
                           const std::string& what) {
  const std::string v = trim(s);
  if (v.empty()) {
    throw io_error(path + ":" + std::to_string(line_no) + ": empty " + what);
  }
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) {
    throw io_error(path + ":" + std::to_string(line_no) + ": non-numeric " + what + " '" + s + "'");
  }
  return out;
}

inline std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

class Writer {
public:
  explicit Writer(const std::string& path) : out_(path), path_(path) {
    if (!out_) throw io_error(path + ": cannot open for writing");
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote_field(fields[i]);
    }
    out_ << '\n';
  }

  const std::string& path() const { return path_; }

private:
  std::ofstream out_;
  std::string path_;
};

} // namespace routeentry::csv
