#include "nodetab/io/csv.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "nodetab/num/error.hpp"

namespace nodetab::io {

namespace {

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* last = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), last, out);
  return ec == std::errc() && p == last;
}

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string load_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io, "cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RawCsv {
  std::vector<std::string> comments;
  std::vector<std::vector<std::string>> records;  // first record is the header
};

RawCsv parse_text(const std::string& text, char delim) {
  RawCsv raw;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n && text[i] == '#') {
    size_t e = text.find('\n', i);
    size_t stop = e == std::string::npos ? n : e;
    std::string line = text.substr(i, stop - i);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    raw.comments.push_back(std::move(line));
    i = stop == n ? n : e + 1;
  }

  std::vector<std::string> rec;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  auto end_field = [&] {
    rec.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    raw.records.push_back(std::move(rec));
    rec.clear();
    any = false;
  };
  while (i < n) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field += ch;
      ++i;
      continue;
    }
    if (ch == '"' && field.empty()) {
      in_quotes = true;
      any = true;
      ++i;
      continue;
    }
    if (ch == delim) {
      end_field();
      any = true;
      ++i;
      continue;
    }
    if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
      ++i;
      if (any || !field.empty()) end_record();
      continue;
    }
    field += ch;
    any = true;
    ++i;
  }
  if (in_quotes) fail(errc::schema, "csv: unterminated quoted field");
  if (any || !field.empty()) end_record();
  return raw;
}

RawCsv load_records(const std::string& path, char delim) {
  RawCsv raw = parse_text(load_text(path), delim);
  if (raw.records.empty()) fail(errc::schema, "csv: missing header row: " + path);
  size_t w = raw.records[0].size();
  for (size_t r = 1; r < raw.records.size(); ++r)
    if (raw.records[r].size() != w)
      fail(errc::schema, "csv: row " + std::to_string(r) + " has " +
                             std::to_string(raw.records[r].size()) + " fields, header has " +
                             std::to_string(w) + ": " + path);
  return raw;
}

bool needs_quotes(const std::string& s, char delim) {
  if (s.empty() || s[0] == '#') return true;
  for (char c : s)
    if (c == delim || c == '"' || c == '\n' || c == '\r') return true;
  return false;
}

void write_field(std::ostream& out, const std::string& s, char delim) {
  if (!needs_quotes(s, delim)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

void write_csv(const std::string& path, const prep::Table& t, const CsvMeta* meta, char delim) {
  t.schema.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io, "cannot open file for writing: " + path);
  if (meta) out << "# config=" << meta->config_hash << " seed=" << meta->seed << "\n";
  const auto& cols = t.schema.columns;
  for (size_t c = 0; c < cols.size(); ++c) {
    if (c) out << delim;
    write_field(out, cols[c].name, delim);
  }
  out << "\n";
  for (int i = 0; i < t.rows(); ++i) {
    for (size_t c = 0; c < cols.size(); ++c) {
      if (c) out << delim;
      if (cols[c].kind == prep::ColumnKind::continuous) {
        out << fmt_double(t.values(i, int(c)));
      } else {
        int idx = int(t.values(i, int(c)));
        if (idx < 0 || idx >= int(cols[c].categories.size()))
          fail(errc::schema, "csv: category index out of range in column " + cols[c].name);
        write_field(out, cols[c].categories[idx], delim);
      }
    }
    out << "\n";
  }
  if (!out) fail(errc::io, "csv write failed: " + path);
}

prep::Table read_csv(const std::string& path, char delim) {
  RawCsv raw = load_records(path, delim);
  const auto& header = raw.records[0];
  int ncols = int(header.size());
  int nrows = int(raw.records.size()) - 1;

  prep::Table t;
  t.values = num::Matrix(nrows, ncols);
  for (int c = 0; c < ncols; ++c) {
    bool numeric = true;
    double v;
    for (int r = 0; r < nrows && numeric; ++r) numeric = parse_double(raw.records[r + 1][c], v);
    prep::ColumnSpec spec;
    spec.name = header[c];
    if (numeric) {
      spec.kind = prep::ColumnKind::continuous;
      for (int r = 0; r < nrows; ++r) {
        parse_double(raw.records[r + 1][c], v);
        t.values.at(r, c) = v;
      }
    } else {
      spec.kind = prep::ColumnKind::discrete;
      std::map<std::string, int> seen;
      for (int r = 0; r < nrows; ++r) {
        const std::string& cell = raw.records[r + 1][c];
        auto it = seen.find(cell);
        if (it == seen.end()) {
          it = seen.emplace(cell, int(spec.categories.size())).first;
          spec.categories.push_back(cell);
        }
        t.values.at(r, c) = double(it->second);
      }
    }
    t.schema.columns.push_back(std::move(spec));
  }
  t.schema.validate();
  return t;
}

prep::Table read_csv(const std::string& path, const prep::TableSchema& schema, char delim) {
  schema.validate();
  RawCsv raw = load_records(path, delim);
  const auto& header = raw.records[0];
  if (header.size() != schema.columns.size())
    fail(errc::schema, "csv: expected " + std::to_string(schema.columns.size()) +
                           " columns, found " + std::to_string(header.size()) + ": " + path);
  for (size_t c = 0; c < header.size(); ++c)
    if (header[c] != schema.columns[c].name)
      fail(errc::schema, "csv: header column " + std::to_string(c) + " is '" + header[c] +
                             "', schema expects '" + schema.columns[c].name + "'");

  int nrows = int(raw.records.size()) - 1;
  int ncols = int(schema.columns.size());
  prep::Table t;
  t.schema = schema;
  t.values = num::Matrix(nrows, ncols);
  std::vector<std::map<std::string, int>> lookup(ncols);
  for (int c = 0; c < ncols; ++c)
    for (size_t k = 0; k < schema.columns[c].categories.size(); ++k)
      lookup[c][schema.columns[c].categories[k]] = int(k);
  for (int r = 0; r < nrows; ++r)
    for (int c = 0; c < ncols; ++c) {
      const std::string& cell = raw.records[r + 1][c];
      if (schema.columns[c].kind == prep::ColumnKind::continuous) {
        double v;
        if (!parse_double(cell, v))
          fail(errc::schema,
               "csv: '" + cell + "' is not a number in column " + schema.columns[c].name);
        t.values.at(r, c) = v;
      } else {
        auto it = lookup[c].find(cell);
        if (it == lookup[c].end())
          fail(errc::schema,
               "csv: unknown category '" + cell + "' in column " + schema.columns[c].name);
        t.values.at(r, c) = double(it->second);
      }
    }
  return t;
}

CsvMeta read_csv_meta(const std::string& path) {
  RawCsv raw = parse_text(load_text(path), ',');
  CsvMeta meta;
  for (const auto& line : raw.comments) {
    std::istringstream ss(line);
    std::string hash_tok, seed_tok;
    std::string head;
    ss >> head >> hash_tok >> seed_tok;
    if (head != "#" || hash_tok.rfind("config=", 0) != 0 || seed_tok.rfind("seed=", 0) != 0)
      continue;
    meta.config_hash = hash_tok.substr(7);
    meta.seed = std::strtoull(seed_tok.c_str() + 5, nullptr, 10);
    meta.present = true;
    break;
  }
  return meta;
}

}  // namespace nodetab::io
