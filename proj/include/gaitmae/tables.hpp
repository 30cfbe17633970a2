#pragma once

// Tab-separated tables used for targets, engineered features, and reports.
// All writers emit deterministic bytes: fixed column order, "%.17g" floats,
// "NaN" for missing values, '\n' line endings.

#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/io_util.hpp"

namespace gaitmae {

inline std::vector<std::string> split_tsv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double_field(const std::string& s, const std::string& context) {
  if (s == "NaN" || s == "nan" || s.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("bad numeric field '" + s + "' in " + context);
  }
  if (used != s.size())
    throw std::runtime_error("bad numeric field '" + s + "' in " + context);
  return v;
}

// Rows keyed by (subject_id, visit_id) with named numeric columns.
// Used for the synthetic target table and for per-visit predictions.
struct TargetTable {
  std::vector<std::string> columns;
  struct Row {
    std::string subject_id;
    std::string visit_id;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }

  const Row* find(const std::string& subject, const std::string& visit) const {
    for (const auto& r : rows)
      if (r.subject_id == subject && r.visit_id == visit) return &r;
    return nullptr;
  }
};

inline std::string render_target_table(const TargetTable& t) {
  std::ostringstream os;
  os << "subject_id\tvisit_id";
  for (const auto& c : t.columns) os << '\t' << c;
  os << '\n';
  for (const auto& r : t.rows) {
    if (r.values.size() != t.columns.size())
      throw std::invalid_argument("target table row width mismatch");
    os << r.subject_id << '\t' << r.visit_id;
    for (double v : r.values) os << '\t' << fmt_double(v);
    os << '\n';
  }
  return os.str();
}

inline void write_target_table(const std::filesystem::path& p, const TargetTable& t) {
  write_file_text(p, render_target_table(t));
}

inline TargetTable read_target_table(const std::filesystem::path& p) {
  const std::string text = read_file_text(p);
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty table: " + p.string());
  auto header = split_tsv_line(line);
  if (header.size() < 2 || header[0] != "subject_id" || header[1] != "visit_id")
    throw std::runtime_error("table must start with subject_id, visit_id columns: " +
                             p.string());
  TargetTable t;
  t.columns.assign(header.begin() + 2, header.end());
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tsv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("row width mismatch at line " + std::to_string(line_no) +
                               " in " + p.string());
    TargetTable::Row r;
    r.subject_id = fields[0];
    r.visit_id = fields[1];
    for (std::size_t i = 2; i < fields.size(); ++i)
      r.values.push_back(parse_double_field(
          fields[i], p.string() + ":" + std::to_string(line_no)));
    t.rows.push_back(std::move(r));
  }
  return t;
}

// Rows keyed by (subject_id, visit_id, activity, sequence_index) with named
// numeric columns. Used for engineered features and embedding joins.
struct FeatureTable {
  std::vector<std::string> columns;
  struct Row {
    std::string subject_id;
    std::string visit_id;
    std::string activity;
    int sequence_index = 0;
    std::vector<double> values;
  };
  std::vector<Row> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::string render_feature_table(const FeatureTable& t) {
  std::ostringstream os;
  os << "subject_id\tvisit_id\tactivity\tsequence_index";
  for (const auto& c : t.columns) os << '\t' << c;
  os << '\n';
  for (const auto& r : t.rows) {
    if (r.values.size() != t.columns.size())
      throw std::invalid_argument("feature table row width mismatch");
    os << r.subject_id << '\t' << r.visit_id << '\t' << r.activity << '\t'
       << r.sequence_index;
    for (double v : r.values) os << '\t' << fmt_double(v);
    os << '\n';
  }
  return os.str();
}

inline void write_feature_table(const std::filesystem::path& p, const FeatureTable& t) {
  write_file_text(p, render_feature_table(t));
}

inline FeatureTable read_feature_table(const std::filesystem::path& p) {
  const std::string text = read_file_text(p);
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty table: " + p.string());
  auto header = split_tsv_line(line);
  if (header.size() < 4 || header[0] != "subject_id" || header[1] != "visit_id" ||
      header[2] != "activity" || header[3] != "sequence_index")
    throw std::runtime_error(
        "table must start with subject_id, visit_id, activity, sequence_index: " +
        p.string());
  FeatureTable t;
  t.columns.assign(header.begin() + 4, header.end());
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tsv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("row width mismatch at line " + std::to_string(line_no) +
                               " in " + p.string());
    FeatureTable::Row r;
    r.subject_id = fields[0];
    r.visit_id = fields[1];
    r.activity = fields[2];
    const double idx = parse_double_field(fields[3], p.string());
    r.sequence_index = static_cast<int>(idx);
    for (std::size_t i = 4; i < fields.size(); ++i)
      r.values.push_back(parse_double_field(
          fields[i], p.string() + ":" + std::to_string(line_no)));
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace gaitmae
