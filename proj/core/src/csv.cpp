#include "linsamp/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "linsamp/errors.hpp"

namespace linsamp::csv {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& cell, const std::filesystem::path& f) {
  try {
    return std::stod(cell);
  } catch (const std::exception&) {
    throw IoError("csv: bad numeric cell '" + cell + "' in " + f.string());
  }
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("csv: cannot open " + file.string() + " for write");
  return out;
}

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("csv: cannot open " + file.string());
  return in;
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_matrix(const std::filesystem::path& file, const Eigen::MatrixXd& m) {
  auto out = open_out(file);
  out << "# " << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ",";
      out << format_double(m(r, c));
    }
    out << "\n";
  }
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::string header;
  std::getline(in, header);
  long rows = 0, cols = 0;
  if (std::sscanf(header.c_str(), "# %ld %ld", &rows, &cols) != 2)
    throw IoError("csv: bad matrix header in " + file.string());
  Eigen::MatrixXd m(rows, cols);
  std::string line;
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(in, line))
      throw IoError("csv: truncated matrix in " + file.string());
    auto cells = split(line, ',');
    if (static_cast<long>(cells.size()) != cols)
      throw IoError("csv: row width mismatch in " + file.string());
    for (long c = 0; c < cols; ++c) m(r, c) = parse_double(cells[c], file);
  }
  return m;
}

void write_sparse(const std::filesystem::path& file,
                  const Eigen::SparseMatrix<double>& m) {
  auto out = open_out(file);
  out << "# coo " << m.rows() << " " << m.cols() << " " << m.nonZeros()
      << "\n";
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      out << it.row() << "," << it.col() << "," << format_double(it.value())
          << "\n";
}

Eigen::SparseMatrix<double> read_sparse(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::string header;
  std::getline(in, header);
  long rows = 0, cols = 0, nnz = 0;
  if (std::sscanf(header.c_str(), "# coo %ld %ld %ld", &rows, &cols, &nnz) !=
      3)
    throw IoError("csv: bad coo header in " + file.string());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != 3)
      throw IoError("csv: bad coo entry in " + file.string());
    triplets.emplace_back(std::stoi(cells[0]), std::stoi(cells[1]),
                          parse_double(cells[2], file));
  }
  if (static_cast<long>(triplets.size()) != nnz)
    throw IoError("csv: coo nnz mismatch in " + file.string());
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

void write_dataset(const std::filesystem::path& file, const Dataset& data) {
  auto out = open_out(file);
  out << "id";
  for (Eigen::Index j = 0; j < data.m(); ++j) out << ",y_" << (j + 1);
  out << "\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < data.m(); ++j)
      out << "," << format_double(data.targets(i, j));
    out << "\n";
  }
}

Dataset read_dataset(const std::filesystem::path& file) {
  auto in = open_in(file);
  std::string header;
  std::getline(in, header);
  auto names = split(header, ',');
  if (names.empty() || names[0] != "id")
    throw IoError("csv: bad dataset header in " + file.string());
  const long m = static_cast<long>(names.size()) - 1;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (static_cast<long>(cells.size()) != m + 1)
      throw IoError("csv: dataset row width mismatch in " + file.string());
    std::vector<double> row(m);
    for (long j = 0; j < m; ++j) row[j] = parse_double(cells[j + 1], file);
    rows.push_back(std::move(row));
  }
  Dataset data;
  data.targets.resize(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (long j = 0; j < m; ++j)
      data.targets(static_cast<Eigen::Index>(i), j) = rows[i][j];
  data.inputs.resize(data.targets.rows(), 0);
  return data;
}

TableWriter::TableWriter(const std::filesystem::path& file,
                         const std::vector<std::string>& columns)
    : path_(file), columns_(columns.size()) {
  require(!columns.empty(), "csv: table needs at least one column");
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) buffer_ += ",";
    buffer_ += columns[i];
  }
  buffer_ += "\n";
}

void TableWriter::row(const std::vector<double>& values) {
  require(values.size() == columns_, "csv: table row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buffer_ += ",";
    buffer_ += format_double(values[i]);
  }
  buffer_ += "\n";
}

void TableWriter::raw_row(const std::vector<std::string>& cells) {
  require(cells.size() == columns_, "csv: table row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buffer_ += ",";
    buffer_ += cells[i];
  }
  buffer_ += "\n";
}

void TableWriter::flush() {
  auto out = open_out(path_);
  out << buffer_;
}

TableWriter::~TableWriter() {
  try {
    flush();
  } catch (...) {
    // destructor must not throw; an unwritable table surfaces on read
  }
}

Eigen::Index Table::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<Eigen::Index>(i);
  throw IoError("csv: missing column " + name);
}

Table read_table(const std::filesystem::path& file) {
  auto in = open_in(file);
  Table t;
  std::string line;
  if (!std::getline(in, line))
    throw IoError("csv: empty table " + file.string());
  t.columns = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != t.columns.size())
      throw IoError("csv: ragged table " + file.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace linsamp::csv
