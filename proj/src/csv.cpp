#include "cfflow/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cfflow {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& column,
                          const std::string& what) {
  std::ostringstream os;
  os << source << ": row " << line;
  if (!column.empty()) os << ", column '" << column << "'";
  os << ": " << what;
  throw Error(os.str());
}

bool numeric_less(const std::string& a, const std::string& b) {
  return *parse_number(a) < *parse_number(b);
}

}  // namespace

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  double value = 0.0;
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw Error("unterminated quoted field");
  fields.push_back(was_quoted ? cur : trim(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos &&
      (field.empty() || (field.front() != ' ' && field.back() != ' '))) {
    return field;
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

Table parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw Error(source + ": missing header row");
  {
    std::set<std::string> unique(header.begin(), header.end());
    if (unique.size() != header.size()) throw Error(source + ": duplicate column names in header");
  }

  const auto label_it = std::find(header.begin(), header.end(), options.label_column);
  const std::optional<std::size_t> label_col =
      label_it == header.end() ? std::nullopt
                               : std::optional<std::size_t>(static_cast<std::size_t>(label_it - header.begin()));

  // Feature columns in output order, as indices into the file's header.
  std::vector<std::size_t> feature_cols;
  if (options.schema_hint) {
    for (const auto& spec : options.schema_hint->features()) {
      const auto it = std::find(header.begin(), header.end(), spec.name);
      if (it == header.end()) throw Error(source + ": missing column '" + spec.name + "'");
      feature_cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    if (!label_col) throw Error(source + ": label column '" + options.label_column + "' not found");
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != *label_col) feature_cols.push_back(c);
    }
    if (feature_cols.empty()) throw Error(source + ": no feature columns");
  }

  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> line_numbers;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(line);
    } catch (const Error& e) {
      fail_at(source, line_no, "", e.what());
    }
    if (fields.size() != header.size()) {
      fail_at(source, line_no, "",
              "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    cells.push_back(std::move(fields));
    line_numbers.push_back(line_no);
  }

  Table table;
  if (options.schema_hint) {
    table.schema = *options.schema_hint;
  } else {
    std::vector<FeatureSpec> specs;
    for (std::size_t fc : feature_cols) {
      FeatureSpec spec;
      spec.name = header[fc];
      bool numeric = !cells.empty();
      for (const auto& row : cells) {
        if (!parse_number(row[fc])) {
          numeric = false;
          break;
        }
      }
      if (numeric) {
        spec.kind = FeatureKind::continuous;
        double sum = 0.0, lo = INFINITY, hi = -INFINITY;
        for (const auto& row : cells) {
          const double v = *parse_number(row[fc]);
          sum += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double mean = sum / static_cast<double>(cells.size());
        double ss = 0.0;
        for (const auto& row : cells) {
          const double d = *parse_number(row[fc]) - mean;
          ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(cells.size()));
        if (!(sd > 0.0) || hi == lo) throw Error(source + ": column '" + spec.name + "' is constant");
        spec.stats = {mean, sd, lo, hi};
      } else {
        spec.kind = FeatureKind::categorical;
        std::set<std::string> cats;
        for (const auto& row : cells) {
          if (row[fc].empty()) {
            fail_at(source, line_numbers[static_cast<std::size_t>(&row - cells.data())], spec.name, "empty value");
          }
          cats.insert(row[fc]);
        }
        if (cats.size() < 2) throw Error(source + ": column '" + spec.name + "' is constant");
        spec.categories.assign(cats.begin(), cats.end());
      }
      specs.push_back(std::move(spec));
    }
    std::set<std::string> label_set;
    for (const auto& row : cells) label_set.insert(row[*label_col]);
    std::vector<std::string> labels(label_set.begin(), label_set.end());
    if (std::all_of(labels.begin(), labels.end(), [](const auto& s) { return parse_number(s).has_value(); })) {
      std::sort(labels.begin(), labels.end(), numeric_less);
    }
    if (labels.size() < 2) throw Error(source + ": label column has fewer than 2 classes");
    table.schema = TableSchema(std::move(specs), std::move(labels), options.label_column);
  }

  const auto& schema = table.schema;
  table.rows.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const auto& row = cells[r];
    Instance x;
    x.values.reserve(feature_cols.size());
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const auto& spec = schema.feature(f);
      const std::string& cell = row[feature_cols[f]];
      if (spec.is_continuous()) {
        const auto v = parse_number(cell);
        if (!v) fail_at(source, line_numbers[r], spec.name, "'" + cell + "' is not a number");
        x.values.emplace_back(*v);
      } else {
        if (std::find(spec.categories.begin(), spec.categories.end(), cell) == spec.categories.end()) {
          fail_at(source, line_numbers[r], spec.name, "unknown category '" + cell + "'");
        }
        x.values.emplace_back(cell);
      }
    }
    table.rows.push_back(std::move(x));
    if (label_col) {
      const auto cls = schema.class_index(row[*label_col]);
      if (!cls) fail_at(source, line_numbers[r], options.label_column, "unknown class '" + row[*label_col] + "'");
      table.labels.push_back(static_cast<int>(*cls));
    }
  }
  return table;
}

Table ingest_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return parse_csv(in, options, path.string());
}

void write_csv(std::ostream& out, const TableSchema& schema, const std::vector<Instance>& rows,
               const std::vector<int>& labels) {
  for (std::size_t f = 0; f < schema.feature_count(); ++f) {
    if (f) out << ',';
    out << csv_escape(schema.feature(f).name);
  }
  if (!labels.empty()) out << ',' << csv_escape(schema.label_column());
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t f = 0; f < rows[r].values.size(); ++f) {
      if (f) out << ',';
      out << csv_escape(format_value(rows[r].values[f]));
    }
    if (!labels.empty()) out << ',' << csv_escape(schema.class_labels().at(static_cast<std::size_t>(labels.at(r))));
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const TableSchema& schema, const std::vector<Instance>& rows,
               const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_csv(out, schema, rows, labels);
}

}  // namespace cfflow
