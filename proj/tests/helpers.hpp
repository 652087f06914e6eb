#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vcd/error.hpp"
#include "vcd/features.hpp"

namespace testing {

/// Code of the vcd::Error thrown by `fn`, or "" if it returns normally.
inline std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const vcd::Error& e) {
    return e.code();
  }
  return "";
}

inline vcd::Matrix to_matrix(const oracle::Rows& rows) {
  vcd::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

inline oracle::Rows to_rows(const vcd::Matrix& m) {
  oracle::Rows rows(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return rows;
}

inline vcd::FeatureSequence sequence(const vcd::Matrix& frames) {
  vcd::FeatureSequence s;
  s.frames = frames;
  s.config_id = "test";
  return s;
}

inline vcd::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  vcd::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vcd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> sine(double hz, double seconds, double amplitude = 0.5, int rate = 16000) {
  std::vector<double> x(static_cast<std::size_t>(seconds * rate));
  for (std::size_t n = 0; n < x.size(); ++n) {
    x[n] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / rate);
  }
  return x;
}

}  // namespace testing
