#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace odcal {

/// Row-major K x D matrix of vehicle counts (veh per aggregation interval per detector).
class CountTable {
 public:
  CountTable() = default;
  CountTable(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), 0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("negative table shape");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  int& at(int r, int c) { return data_[index(r, c)]; }
  int at(int r, int c) const { return data_[index(r, c)]; }

  std::span<int> row(int r) { return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)}; }
  std::span<const int> row(int r) const {
    return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)};
  }
  std::span<const int> values() const noexcept { return data_; }
  long long total() const noexcept;

  friend bool operator==(const CountTable&, const CountTable&) = default;

 private:
  std::size_t index(int r, int c) const {
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_) throw std::out_of_range("CountTable index");
    return static_cast<std::size_t>(r * cols_ + c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> data_;
};

/// Squared Euclidean distance between two equally shaped tables, summed over all cells.
double squared_error(const CountTable& a, const CountTable& b);
/// ||a_k - b_k||^2 for one row.
double squared_error_row(const CountTable& a, const CountTable& b, int row);

/// T x n_od binary departure decisions; step index is 0-based here and 1-based in files.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(int steps, int n_od)
      : steps_(steps), n_od_(n_od), bits_(static_cast<std::size_t>(steps * n_od), 0) {
    if (steps < 0 || n_od < 0) throw std::invalid_argument("negative trajectory shape");
  }

  int steps() const noexcept { return steps_; }
  int od_count() const noexcept { return n_od_; }

  std::uint8_t& at(int t, int od) { return bits_[index(t, od)]; }
  std::uint8_t at(int t, int od) const { return bits_[index(t, od)]; }
  std::span<const std::uint8_t> step(int t) const {
    return {bits_.data() + index(t, 0), static_cast<std::size_t>(n_od_)};
  }
  std::span<std::uint8_t> step(int t) { return {bits_.data() + index(t, 0), static_cast<std::size_t>(n_od_)}; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  long long departures() const noexcept;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::size_t index(int t, int od) const {
    if (t < 0 || t >= steps_ || od < 0 || od >= n_od_) throw std::out_of_range("Trajectory index");
    return static_cast<std::size_t>(t * n_od_ + od);
  }

  int steps_ = 0;
  int n_od_ = 0;
  std::vector<std::uint8_t> bits_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// K x D CSV with a header row of detector link ids.
void write_count_table(const CountTable& table, std::span<const int> detector_links,
                       const std::filesystem::path& path);
CountTable read_count_table(const std::filesystem::path& path, std::vector<int>* header = nullptr);

/// CSV "t,od0,...": one row per input step, t starting at 1.
void write_trajectory(const Trajectory& trajectory, const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path);

}  // namespace odcal
