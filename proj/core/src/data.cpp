#include "stkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "stkd/error.hpp"
#include "stkd/rng.hpp"
#include "text_util.hpp"

namespace stkd {
namespace {

std::size_t steps_per_day_for(double step_minutes) {
  if (!(step_minutes > 0.0)) {
    throw ParameterError("step_minutes must be > 0, got " + std::to_string(step_minutes));
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1440.0 / step_minutes)));
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NAN" || cell == "NA";
}

}  // namespace

std::size_t TrafficSeries::steps_per_day() const { return steps_per_day_for(step_minutes); }

TrafficSeries generate_synthetic(const Graph& g, std::size_t n_steps, double step_minutes,
                                 std::uint64_t seed, const GeneratorParams& params) {
  if (n_steps == 0) throw ParameterError("n_steps must be positive");
  if (params.amplitude_min < 0.0 || params.amplitude_max < params.amplitude_min) {
    throw ParameterError("amplitude range must satisfy 0 <= min <= max");
  }
  if (params.noise < 0.0) throw ParameterError("noise must be >= 0");
  const auto n = g.n_nodes();
  const auto day = static_cast<double>(steps_per_day_for(step_minutes));
  const auto adj = symmetric_normalize(g);

  Rng node_rng(seed, /*stream=*/1);
  std::vector<double> amplitude(n), phase(n);
  for (std::size_t i = 0; i < n; ++i) {
    amplitude[i] = node_rng.uniform(params.amplitude_min, params.amplitude_max);
    phase[i] = node_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  TrafficSeries s;
  s.n_nodes = n;
  s.n_steps = n_steps;
  s.step_minutes = step_minutes;
  s.values.resize(n_steps * n);
  for (std::size_t i = 0; i < n; ++i) {
    s.values[i] = params.initial_level
                      ? *params.initial_level
                      : (params.alpha < 1.0 ? amplitude[i] / (1.0 - params.alpha) : amplitude[i]);
  }

  Rng noise_rng(seed, /*stream=*/2);
  for (std::size_t t = 0; t + 1 < n_steps; ++t) {
    const double* cur = s.values.data() + t * n;
    double* next = s.values.data() + (t + 1) * n;
    for (std::size_t i = 0; i < n; ++i) {
      double mixed = 0.0;
      for (auto k = adj.row_offsets[i]; k < adj.row_offsets[i + 1]; ++k) {
        mixed += adj.values[k] * cur[adj.cols[k]];
      }
      const double diurnal =
          1.0 + std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / day + phase[i]);
      const double eps = params.noise > 0.0 ? params.noise * noise_rng.normal() : 0.0;
      next[i] = std::max(0.0, params.alpha * mixed + amplitude[i] * diurnal + eps);
    }
  }
  return s;
}

TrafficSeries load_readings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open readings file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: empty file");
  const auto header = detail::split_csv(line);
  if (header.size() < 2 || header[0] != "timestamp") {
    throw FormatError(path.string() + ":1: expected header `timestamp,node_0,...`");
  }
  TrafficSeries s;
  s.n_nodes = header.size() - 1;

  std::optional<double> prev_numeric;
  std::string prev_text;
  std::size_t line_no = 1;
  std::vector<double> first_two;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(cells.size()));
    }
    const std::string stamp(cells[0]);
    const auto numeric = detail::parse_double(cells[0]);
    if (!s.timestamps.empty()) {
      const bool increasing = (numeric && prev_numeric) ? *numeric > *prev_numeric
                                                        : stamp > prev_text;
      if (!increasing) throw DataError(where + ": timestamp " + stamp + " is not increasing");
    }
    if (numeric && first_two.size() < 2) first_two.push_back(*numeric);
    prev_numeric = numeric;
    prev_text = stamp;
    s.timestamps.push_back(stamp);
    for (std::size_t k = 1; k < cells.size(); ++k) {
      if (is_missing(cells[k])) {
        s.values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = detail::parse_double(cells[k]);
      if (!v) throw FormatError(where + ": malformed value `" + std::string(cells[k]) + "`");
      s.values.push_back(*v);
    }
  }
  s.n_steps = s.timestamps.size();
  if (first_two.size() == 2 && first_two[1] > first_two[0]) s.step_minutes = first_two[1] - first_two[0];

  for (std::size_t i = 0; i < s.n_nodes; ++i) {
    double last = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 0; t < s.n_steps; ++t) {
      double& v = s.values[t * s.n_nodes + i];
      if (std::isfinite(v)) {
        last = v;
        continue;
      }
      v = std::isfinite(last) ? last : 0.0;
      ++s.filled;
    }
  }
  return s;
}

void save_readings_csv(const TrafficSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write readings file " + path.string());
  out << "timestamp";
  for (std::size_t i = 0; i < series.n_nodes; ++i) out << ",node_" << i;
  out << '\n';
  for (std::size_t t = 0; t < series.n_steps; ++t) {
    if (t < series.timestamps.size()) {
      out << series.timestamps[t];
    } else {
      out << detail::format_double(static_cast<double>(t) * series.step_minutes);
    }
    for (std::size_t i = 0; i < series.n_nodes; ++i) {
      out << ',' << detail::format_double(series.at(t, i));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

const std::vector<std::size_t>& WindowedDataset::windows(Split s) const {
  if (s == Split::gap) throw ParameterError("gap windows are not a split");
  return members_[static_cast<std::size_t>(s)];
}

std::pair<std::size_t, std::size_t> WindowedDataset::step_range(Split s) const {
  if (s == Split::gap) throw ParameterError("gap windows are not a split");
  const auto k = static_cast<std::size_t>(s);
  return {boundaries_[k], boundaries_[k + 1]};
}

Tensor WindowedDataset::input(std::size_t window) const {
  if (window >= n_windows()) throw ParameterError("window index out of range");
  const auto begin = values_.begin() + static_cast<std::ptrdiff_t>(window * n_nodes_);
  return Tensor::from({history_, n_nodes_, 1},
                      std::span<const double>(&*begin, history_ * n_nodes_));
}

Tensor WindowedDataset::target(std::size_t window) const {
  if (window >= n_windows()) throw ParameterError("window index out of range");
  const auto begin = values_.begin() + static_cast<std::ptrdiff_t>((window + history_) * n_nodes_);
  return Tensor::from({horizon_, n_nodes_},
                      std::span<const double>(&*begin, horizon_ * n_nodes_));
}

std::size_t WindowedDataset::slot(std::size_t window) const {
  return (window + history_ - 1) % steps_per_day_;
}

WindowedDataset make_windows(const TrafficSeries& series, std::size_t history,
                             std::size_t horizon, SplitFractions fractions) {
  if (history == 0 || horizon == 0) throw ParameterError("history and horizon must be >= 1");
  const double total = fractions.train + fractions.val + fractions.test;
  if (fractions.train <= 0.0 || fractions.val < 0.0 || fractions.test < 0.0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw ParameterError("split fractions must be non-negative, train > 0, and sum to 1");
  }
  if (series.n_steps < history + horizon) {
    throw DataError("series of " + std::to_string(series.n_steps) +
                    " steps is too short for history " + std::to_string(history) +
                    " + horizon " + std::to_string(horizon));
  }
  WindowedDataset d;
  d.history_ = history;
  d.horizon_ = horizon;
  d.n_nodes_ = series.n_nodes;
  d.n_steps_ = series.n_steps;
  d.steps_per_day_ = series.steps_per_day();
  d.values_ = series.values;

  const std::size_t n_windows = series.n_steps - history - horizon + 1;
  const auto steps = static_cast<double>(series.n_steps);
  // The slack keeps 0.7 + 0.1 from flooring one step short.
  auto boundary = [&](double fraction) {
    return std::min(series.n_steps, static_cast<std::size_t>(std::floor(fraction * steps + 1e-9)));
  };
  const auto train_end = boundary(fractions.train);
  const auto val_end = std::max(train_end, boundary(fractions.train + fractions.val));
  d.boundaries_ = {0, train_end, val_end, series.n_steps};

  const std::size_t span = history + horizon;
  d.split_.assign(n_windows, Split::gap);
  for (std::size_t w = 0; w < n_windows; ++w) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (w >= d.boundaries_[k] && w + span <= d.boundaries_[k + 1]) {
        d.split_[w] = static_cast<Split>(k);
        d.members_[k].push_back(w);
        break;
      }
    }
  }
  if (d.members_[0].empty()) {
    throw DataError("series of " + std::to_string(series.n_steps) +
                    " steps leaves no complete training window");
  }
  return d;
}

WindowedDataset normalize(const WindowedDataset& raw) {
  const auto [first, last] = raw.step_range(Split::train);
  const auto n = raw.n_nodes();
  const auto count = static_cast<double>((last - first) * n);
  double sum = 0.0;
  for (std::size_t t = first; t < last; ++t) {
    for (std::size_t i = 0; i < n; ++i) sum += raw.value(t, i);
  }
  const double mean = sum / count;
  double ss = 0.0;
  for (std::size_t t = first; t < last; ++t) {
    for (std::size_t i = 0; i < n; ++i) ss += (raw.value(t, i) - mean) * (raw.value(t, i) - mean);
  }
  const double stddev = std::sqrt(ss / count);
  if (!(stddev > 0.0) || !std::isfinite(stddev)) {
    throw DataError("training split has zero variance; cannot z-score normalize");
  }
  WindowedDataset d = raw;
  d.normalizer_ = Normalizer{mean, stddev};
  for (auto& v : d.values_) v = (v - mean) / stddev;
  return d;
}

}  // namespace stkd
