#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/error.hpp"

namespace bforest {

/// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  if (begin == end) throw DataError("missing value " + context);
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw DataError("non-numeric value '" + std::string(text) + "' " + context);
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw DataError("column '" + name + "' not found in CSV header");
  }
};

/// RFC-4180 reader: quoted fields, escaped quotes, CR/LF line ends, mandatory
/// header row. Errors carry 1-based line positions.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool pending = false;  // true once the current record has any content
  std::size_t line = 1;

  auto end_field = [&]() {
    record.push_back(field);
    field.clear();
  };
  auto end_record = [&](std::size_t at_line) {
    if (!pending) return;  // blank line
    end_field();
    if (table.header.empty()) {
      table.header = std::move(record);
    } else {
      if (record.size() != table.header.size())
        throw DataError("CSV line " + std::to_string(at_line) + ": expected " +
                        std::to_string(table.header.size()) + " fields, got " +
                        std::to_string(record.size()));
      table.rows.push_back(std::move(record));
    }
    record.clear();
    pending = false;
  };

  std::size_t i = 0;
  const std::size_t len = text.size();
  while (i < len) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < len && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
        } else {
          quoted = false;
          ++i;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
        ++i;
      }
    } else if (c == '"') {
      quoted = true;
      pending = true;
      ++i;
    } else if (c == ',') {
      end_field();
      pending = true;
      ++i;
    } else if (c == '\r' || c == '\n') {
      const std::size_t at_line = line;
      ++i;
      if (c == '\r' && i < len && text[i] == '\n') ++i;
      end_record(at_line);
      ++line;
    } else {
      field.push_back(c);
      pending = true;
      ++i;
    }
  }
  if (quoted) throw DataError("CSV line " + std::to_string(line) + ": unterminated quote");
  end_record(line);
  if (table.header.empty()) throw DataError("CSV file is empty: " + path.string());
  return table;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file: " + path.string());
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << csv_escape(row[j]);
    }
    out << '\n';
  };
  write_row(header);
  for (const auto& row : rows) write_row(row);
}

/// Per-column roles for ingestion. Columns not mentioned default to numeric
/// features; exactly one column must resolve to the response role.
struct CsvSchema {
  std::map<std::string, ColumnRole> roles;
  Task task = Task::kRegression;
};

namespace detail {

inline std::string cell_context(const CsvTable& table, std::size_t row, std::size_t col) {
  // +2: 1-based and the header line.
  return "at row " + std::to_string(row + 2) + ", column '" + table.header[col] + "'";
}

}  // namespace detail

/// Reads a CSV file into a Dataset. Categorical features are one-hot expanded
/// into 0/1 columns named "<column>=<level>" (input column order, levels
/// sorted). Classification responses are re-indexed densely over sorted
/// labels; the label map lands in the schema.
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const CsvTable table = read_csv(path);
  for (const auto& [name, role] : schema.roles) {
    bool found = false;
    for (const auto& h : table.header) found = found || h == name;
    if (!found) throw DataError("schema names unknown column '" + name + "'");
    (void)role;
  }
  if (table.rows.empty()) throw DataError("CSV file has a header but no data rows: " + path.string());

  std::vector<ColumnRole> roles(table.header.size(), ColumnRole::kNumericFeature);
  std::size_t response_col = table.header.size();
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const auto it = schema.roles.find(table.header[j]);
    if (it != schema.roles.end()) roles[j] = it->second;
    if (roles[j] == ColumnRole::kResponse) {
      if (response_col != table.header.size())
        throw DataError("schema declares more than one response column");
      response_col = j;
    }
  }
  if (response_col == table.header.size())
    throw DataError("schema must declare exactly one response column");

  const std::size_t n = table.rows.size();
  DataSchema out_schema;
  out_schema.task = schema.task;
  out_schema.response_name = table.header[response_col];

  std::vector<std::vector<double>> columns;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    ColumnSpec spec{table.header[j], roles[j], {}};
    switch (roles[j]) {
      case ColumnRole::kIgnore:
      case ColumnRole::kResponse:
        break;
      case ColumnRole::kNumericFeature: {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i)
          col[i] = parse_double(table.rows[i][j], detail::cell_context(table, i, j));
        columns.push_back(std::move(col));
        names.push_back(table.header[j]);
        break;
      }
      case ColumnRole::kCategoricalFeature: {
        std::set<std::string> levels;
        for (std::size_t i = 0; i < n; ++i) {
          if (table.rows[i][j].empty())
            throw DataError("missing value " + detail::cell_context(table, i, j));
          levels.insert(table.rows[i][j]);
        }
        spec.levels.assign(levels.begin(), levels.end());
        for (const auto& level : spec.levels) {
          std::vector<double> col(n);
          for (std::size_t i = 0; i < n; ++i)
            col[i] = table.rows[i][j] == level ? 1.0 : 0.0;
          columns.push_back(std::move(col));
          names.push_back(table.header[j] + "=" + level);
        }
        break;
      }
    }
    out_schema.columns.push_back(std::move(spec));
  }

  std::vector<double> response(n);
  std::vector<std::string> class_labels;
  if (schema.task == Task::kRegression) {
    for (std::size_t i = 0; i < n; ++i)
      response[i] =
          parse_double(table.rows[i][response_col], detail::cell_context(table, i, response_col));
  } else {
    std::set<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (table.rows[i][response_col].empty())
        throw DataError("missing value " + detail::cell_context(table, i, response_col));
      labels.insert(table.rows[i][response_col]);
    }
    class_labels.assign(labels.begin(), labels.end());
    std::map<std::string, std::uint32_t> index;
    for (std::uint32_t k = 0; k < class_labels.size(); ++k) index[class_labels[k]] = k;
    for (std::size_t i = 0; i < n; ++i) response[i] = index[table.rows[i][response_col]];
  }
  out_schema.class_labels = class_labels;

  return Dataset(std::move(columns), std::move(names), std::move(response), schema.task,
                 std::move(class_labels), std::move(out_schema));
}

/// Expands raw CSV rows into the encoded feature matrix of a stored schema
/// (prediction path). The response column may be absent. Unseen categorical
/// levels are an error naming the column.
inline std::vector<std::vector<double>> encode_features(const CsvTable& table,
                                                        const DataSchema& schema) {
  const std::size_t n = table.rows.size();
  std::vector<std::vector<double>> rows(n);

  struct Source {
    std::size_t csv_col;
    const ColumnSpec* spec;
  };
  std::vector<Source> sources;
  for (const auto& spec : schema.columns) {
    if (spec.role != ColumnRole::kNumericFeature && spec.role != ColumnRole::kCategoricalFeature)
      continue;
    sources.push_back({table.column(spec.name), &spec});
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& out = rows[i];
    for (const auto& src : sources) {
      const std::string& cell = table.rows[i][src.csv_col];
      if (src.spec->role == ColumnRole::kNumericFeature) {
        out.push_back(parse_double(cell, detail::cell_context(table, i, src.csv_col)));
      } else {
        bool seen = false;
        for (const auto& level : src.spec->levels) {
          const bool hit = cell == level;
          out.push_back(hit ? 1.0 : 0.0);
          seen = seen || hit;
        }
        if (!seen)
          throw DataError("unseen level '" + cell + "' in categorical column '" +
                          src.spec->name + "'");
      }
    }
  }
  return rows;
}

}  // namespace bforest
