#include "flowcast/io_csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowcast/errors.hpp"

#include <json.hpp>

namespace flowcast {

namespace {

void write_rows(std::ofstream& out, const Tensor& matrix) {
  const long rows = matrix.dim(0), cols = matrix.dim(1);
  char buf[64];
  for (long i = 0; i < rows; ++i) {
    std::string line;
    for (long j = 0; j < cols; ++j) {
      if (j) line.push_back(',');
      const int len = std::snprintf(buf, sizeof buf, "%.17g", matrix.at(i, j));
      line.append(buf, static_cast<size_t>(len));
    }
    line.push_back('\n');
    out << line;
  }
}

Tensor read_rows(std::ifstream& in, const std::string& path, long rows, long cols) {
  Tensor matrix({rows, cols});
  std::string line;
  for (long i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      throw DataError(path + ": expected " + std::to_string(rows) + " rows");
    }
    size_t pos = 0;
    for (long j = 0; j < cols; ++j) {
      size_t comma = line.find(',', pos);
      const std::string field =
          line.substr(pos, (comma == std::string::npos ? line.size() : comma) - pos);
      try {
        matrix.at(i, j) = std::stod(field);
      } catch (const std::exception&) {
        throw DataError(path + ": bad number '" + field + "'");
      }
      pos = comma == std::string::npos ? line.size() : comma + 1;
    }
  }
  return matrix;
}

std::pair<long, long> read_header(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::istringstream hs(line);
  long rows = 0, cols = 0;
  char c = 0;
  if (!(hs >> rows >> c >> cols) || c != ',' || rows <= 0 || cols <= 0) {
    throw DataError(path + ": bad header '" + line + "'");
  }
  return {rows, cols};
}

}  // namespace

void write_matrix_csv(const std::string& path, const Tensor& matrix) {
  if (matrix.rank() != 2) throw DataError("write_matrix_csv: need a rank-2 tensor");
  std::ofstream out(path);
  if (!out) throw DataError("write_matrix_csv: cannot open " + path);
  out << matrix.dim(0) << "," << matrix.dim(1) << "\n";
  write_rows(out, matrix);
}

Tensor read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_matrix_csv: cannot open " + path);
  const auto [rows, cols] = read_header(in, path);
  return read_rows(in, path, rows, cols);
}

void write_patterns_csv(const std::string& path, const PatternSet& patterns) {
  std::ofstream out(path);
  if (!out) throw DataError("write_patterns_csv: cannot open " + path);
  out << patterns.centroids.dim(0) << "," << patterns.window << "\n";
  write_rows(out, patterns.centroids);
}

PatternSet read_patterns_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_patterns_csv: cannot open " + path);
  const auto [count, window] = read_header(in, path);
  PatternSet out;
  out.window = window;
  out.centroids = read_rows(in, path, count, window);
  return out;
}

void write_scaler_json(const std::string& path, const Scaler& scaler) {
  nlohmann::json j;
  j["mean"] = scaler.mean;
  j["stddev"] = scaler.stddev;
  j["degenerate"] = scaler.degenerate;
  std::ofstream out(path);
  if (!out) throw DataError("write_scaler_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

Scaler read_scaler_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_scaler_json: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    Scaler scaler;
    scaler.mean = j.at("mean").get<std::vector<double>>();
    scaler.stddev = j.at("stddev").get<std::vector<double>>();
    scaler.degenerate = j.at("degenerate").get<std::vector<std::uint8_t>>();
    return scaler;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("read_scaler_json: " + path + ": " + e.what());
  }
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("write_history_csv: cannot open " + path);
  out << "epoch,train_loss,val_mae,val_rmse,val_mape,wall_seconds\n";
  out.precision(17);
  for (const EpochStats& e : history) {
    out << e.epoch << "," << e.train_loss << "," << e.val_mae << "," << e.val_rmse << ","
        << e.val_mape << "," << e.wall_seconds << "\n";
  }
}

}  // namespace flowcast
