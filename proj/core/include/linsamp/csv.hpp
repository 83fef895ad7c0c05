#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <filesystem>
#include <string>
#include <vector>

#include "linsamp/dataset.hpp"

namespace linsamp::csv {

// Round-trip-exact formatting used for every emitted number.
std::string format_double(double value);

// Dense matrix, row-major values, header line "# rows cols".
void write_matrix(const std::filesystem::path& file, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& file);

// Sparse matrix, header "# coo rows cols nnz", then "i,j,v" lines.
void write_sparse(const std::filesystem::path& file,
                  const Eigen::SparseMatrix<double>& m);
Eigen::SparseMatrix<double> read_sparse(const std::filesystem::path& file);

// Dataset: header "id,y_1,...,y_m", one row per observation.
void write_dataset(const std::filesystem::path& file, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& file);

// Generic table with a named header; used for trace/metric emission.
class TableWriter {
 public:
  TableWriter(const std::filesystem::path& file,
              const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void raw_row(const std::vector<std::string>& cells);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::size_t columns_;
  std::string buffer_;
  void flush();
  friend class TableScope;

 public:
  ~TableWriter();
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  Eigen::Index column_index(const std::string& name) const;
};
Table read_table(const std::filesystem::path& file);

}  // namespace linsamp::csv
