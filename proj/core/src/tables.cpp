#include "odcal/tables.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace odcal {

long long CountTable::total() const noexcept {
  return std::accumulate(data_.begin(), data_.end(), 0LL);
}

double squared_error(const CountTable& a, const CountTable& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("table shape mismatch");
  double sum = 0.0;
  for (int r = 0; r < a.rows(); ++r) sum += squared_error_row(a, b, r);
  return sum;
}

double squared_error_row(const CountTable& a, const CountTable& b, int row) {
  if (a.cols() != b.cols()) throw std::invalid_argument("table shape mismatch");
  double sum = 0.0;
  for (int c = 0; c < a.cols(); ++c) {
    const double e = a.at(row, c) - b.at(row, c);
    sum += e * e;
  }
  return sum;
}

long long Trajectory::departures() const noexcept {
  return std::accumulate(bits_.begin(), bits_.end(), 0LL);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

int parse_int(const std::string& s, const std::filesystem::path& path) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError(path.string() + ": expected integer, got '" + s + "'");
  return v;
}

}  // namespace

void write_count_table(const CountTable& table, std::span<const int> detector_links,
                       const std::filesystem::path& path) {
  if (static_cast<int>(detector_links.size()) != table.cols()) {
    throw std::invalid_argument("header size does not match table columns");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t c = 0; c < detector_links.size(); ++c) out << (c ? "," : "") << detector_links[c];
  out << '\n';
  for (int r = 0; r < table.rows(); ++r) {
    for (int c = 0; c < table.cols(); ++c) out << (c ? "," : "") << table.at(r, c);
    out << '\n';
  }
}

CountTable read_count_table(const std::filesystem::path& path, std::vector<int>* header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  std::vector<int> head;
  for (const auto& cell : split_csv(line)) head.push_back(parse_int(cell, path));
  std::vector<std::vector<int>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<int> row;
    for (const auto& cell : split_csv(line)) row.push_back(parse_int(cell, path));
    if (row.size() != head.size()) throw FormatError(path.string() + ": ragged row");
    rows.push_back(std::move(row));
  }
  CountTable table(static_cast<int>(rows.size()), static_cast<int>(head.size()));
  for (int r = 0; r < table.rows(); ++r) {
    for (int c = 0; c < table.cols(); ++c) {
      const int v = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (v < 0) throw FormatError(path.string() + ": negative count");
      table.at(r, c) = v;
    }
  }
  if (header) *header = std::move(head);
  return table;
}

void write_trajectory(const Trajectory& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << 't';
  for (int od = 0; od < trajectory.od_count(); ++od) out << ",od" << od;
  out << '\n';
  for (int t = 0; t < trajectory.steps(); ++t) {
    out << t + 1;
    for (int od = 0; od < trajectory.od_count(); ++od) out << ',' << int{trajectory.at(t, od)};
    out << '\n';
  }
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto head = split_csv(line);
  if (head.empty() || head[0] != "t") throw FormatError(path.string() + ": missing 't' header");
  const int n_od = static_cast<int>(head.size()) - 1;
  std::vector<std::vector<std::uint8_t>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != n_od + 1) throw FormatError(path.string() + ": ragged row");
    if (parse_int(cells[0], path) != static_cast<int>(rows.size()) + 1) {
      throw FormatError(path.string() + ": steps must be consecutive from 1");
    }
    std::vector<std::uint8_t> bits;
    for (int od = 0; od < n_od; ++od) {
      const int b = parse_int(cells[static_cast<std::size_t>(od) + 1], path);
      if (b != 0 && b != 1) throw FormatError(path.string() + ": action bits must be 0 or 1");
      bits.push_back(static_cast<std::uint8_t>(b));
    }
    rows.push_back(std::move(bits));
  }
  Trajectory traj(static_cast<int>(rows.size()), n_od);
  for (int t = 0; t < traj.steps(); ++t) {
    for (int od = 0; od < n_od; ++od) traj.at(t, od) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(od)];
  }
  return traj;
}

}  // namespace odcal
