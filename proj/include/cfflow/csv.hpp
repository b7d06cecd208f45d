#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfflow/schema.hpp"

namespace cfflow {

// Rows under a schema. `labels` is empty when the source had no label column.
struct Table {
  TableSchema schema;
  std::vector<Instance> rows;
  std::vector<int> labels;
};

struct CsvOptions {
  std::string label_column = "label";
  // When set, columns are parsed under this schema and its statistics are kept.
  std::optional<TableSchema> schema_hint;
};

// Reads a comma-delimited file with a header row. Without a schema hint, column
// kinds are inferred (all-numeric means continuous), statistics are computed
// from the rows, and the label column is required.
Table ingest_csv(const std::filesystem::path& path, const CsvOptions& options = {});
Table parse_csv(std::istream& in, const CsvOptions& options = {}, const std::string& source = "<input>");

void write_csv(std::ostream& out, const TableSchema& schema, const std::vector<Instance>& rows,
               const std::vector<int>& labels = {});
void write_csv(const std::filesystem::path& path, const TableSchema& schema,
               const std::vector<Instance>& rows, const std::vector<int>& labels = {});

// RFC 4180-style field splitting with surrounding whitespace trimmed.
std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);

std::optional<double> parse_number(const std::string& s);

}  // namespace cfflow
