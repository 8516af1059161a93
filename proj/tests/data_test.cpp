#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "stkd/data.hpp"
#include "stkd/error.hpp"
#include "support.hpp"

namespace stkd {
namespace {

using testing::TempDir;

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

double autocorrelation(const TrafficSeries& s, std::size_t node, std::size_t lag) {
  const auto len = s.n_steps - lag;
  double ma = 0.0, mb = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    ma += s.at(t, node);
    mb += s.at(t + lag, node);
  }
  ma /= static_cast<double>(len);
  mb /= static_cast<double>(len);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    const double a = s.at(t, node) - ma, b = s.at(t + lag, node) - mb;
    cov += a * b;
    va += a * a;
    vb += b * b;
  }
  return cov / std::sqrt(va * vb);
}

TEST(Generator, DeterministicPerSeed) {
  const auto g = erdos_renyi_geometric(20, 0.3, 1);
  const auto a = generate_synthetic(g, 300, 5.0, 3);
  EXPECT_EQ(a.values, generate_synthetic(g, 300, 5.0, 3).values);
  EXPECT_NE(a.values, generate_synthetic(g, 300, 5.0, 4).values);
  EXPECT_EQ(a.n_steps, 300u);
  EXPECT_EQ(a.steps_per_day(), 288u);
  for (double v : a.values) EXPECT_GE(v, 0.0);
}

TEST(Generator, ConstantOnRegularGraphWithoutForcing) {
  GeneratorParams p;
  p.alpha = 1.0;
  p.amplitude_min = p.amplitude_max = 0.0;
  p.noise = 0.0;
  p.initial_level = 42.0;
  const auto s = generate_synthetic(complete_graph(6), 200, 5.0, 1, p);
  for (double v : s.values) EXPECT_NEAR(v, 42.0, 1e-9);

  p.alpha = 0.85;
  const auto decay = generate_synthetic(complete_graph(6), 20, 5.0, 1, p);
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(decay.at(t, i), 42.0 * std::pow(0.85, t), 1e-9);
  }
}

TEST(Generator, DailyLagBeatsHalfDayLag) {
  const auto g = erdos_renyi_geometric(30, 0.3, 5);
  const auto s = generate_synthetic(g, 2016, 5.0, 42);
  const auto day = s.steps_per_day();
  for (std::size_t node = 0; node < 30; ++node) {
    EXPECT_GT(autocorrelation(s, node, day), autocorrelation(s, node, day / 2)) << node;
  }
}

TEST(Generator, RejectsBadParameters) {
  const auto g = complete_graph(3);
  EXPECT_THROW(generate_synthetic(g, 0, 5.0, 1), ParameterError);
  EXPECT_THROW(generate_synthetic(g, 10, 0.0, 1), ParameterError);
  GeneratorParams p;
  p.noise = -1.0;
  EXPECT_THROW(generate_synthetic(g, 10, 5.0, 1, p), ParameterError);
}

TEST(ReadingsCsv, LoadsWellFormedFile) {
  TempDir dir("csv");
  write(dir / "r.csv", "timestamp,node_0,node_1\n0,1,2\n5,3,4\n10,5,6\n");
  const auto s = load_readings_csv(dir / "r.csv");
  EXPECT_EQ(s.n_steps, 3u);
  EXPECT_EQ(s.n_nodes, 2u);
  EXPECT_EQ(s.values, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(s.filled, 0u);
  EXPECT_EQ(s.step_minutes, 5.0);
}

TEST(ReadingsCsv, FillsMissingCells) {
  TempDir dir("csv");
  write(dir / "r.csv", "timestamp,node_0,node_1\n0,1,2\n5,NaN,4\n10,5,6\n");
  const auto s = load_readings_csv(dir / "r.csv");
  EXPECT_EQ(s.filled, 1u);
  EXPECT_EQ(s.at(1, 0), 1.0);
  write(dir / "lead.csv", "timestamp,node_0\n0,\n5,7\n");
  const auto lead = load_readings_csv(dir / "lead.csv");
  EXPECT_EQ(lead.values, (std::vector<double>{0, 7}));
  EXPECT_EQ(lead.filled, 1u);
}

TEST(ReadingsCsv, ReportsFormatProblems) {
  TempDir dir("csv");
  write(dir / "ragged.csv", "timestamp,node_0,node_1\n0,1,2\n5,3\n");
  try {
    (void)load_readings_csv(dir / "ragged.csv");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
  write(dir / "order.csv", "timestamp,node_0\n5,1\n0,2\n");
  EXPECT_THROW(load_readings_csv(dir / "order.csv"), DataError);
  write(dir / "header.csv", "time,node_0\n0,1\n");
  EXPECT_THROW(load_readings_csv(dir / "header.csv"), FormatError);
  write(dir / "junk.csv", "timestamp,node_0\n0,abc\n");
  EXPECT_THROW(load_readings_csv(dir / "junk.csv"), FormatError);
  EXPECT_THROW(load_readings_csv(dir / "absent.csv"), IoError);
}

TEST(ReadingsCsv, RoundTrip) {
  TempDir dir("csv");
  const auto s = generate_synthetic(erdos_renyi_geometric(10, 0.4, 2), 100, 5.0, 8);
  save_readings_csv(s, dir / "r.csv");
  const auto back = load_readings_csv(dir / "r.csv");
  ASSERT_EQ(back.values.size(), s.values.size());
  for (std::size_t i = 0; i < s.values.size(); ++i) EXPECT_NEAR(back.values[i], s.values[i], 1e-9);
  EXPECT_EQ(back.step_minutes, 5.0);
}

TrafficSeries ramp(std::size_t steps, std::size_t nodes) {
  TrafficSeries s;
  s.n_nodes = nodes;
  s.n_steps = steps;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < nodes; ++i) s.values.push_back(static_cast<double>(t * 10 + i));
  }
  return s;
}

TEST(Windows, CountAndIndexing) {
  const auto d = make_windows(ramp(100, 2), 12, 3);
  EXPECT_EQ(d.n_windows(), 86u);
  EXPECT_EQ(d.target(0).data()[0], 120.0);
  EXPECT_EQ(d.input(5).data()[0], 50.0);
  EXPECT_EQ(d.input(5).shape(), (Shape{12, 2, 1}));
  EXPECT_EQ(d.target(5).shape(), (Shape{3, 2}));
  EXPECT_THROW(d.input(86), ParameterError);
}

TEST(Windows, CountFormulaExhaustive) {
  for (std::size_t T = 2; T <= 50; ++T) {
    const auto s = ramp(T, 1);
    for (std::size_t th = 1; th < T; ++th) {
      for (std::size_t tp = 1; th + tp <= T; ++tp) {
        const auto d = make_windows(s, th, tp, SplitFractions{1.0, 0.0, 0.0});
        ASSERT_EQ(d.n_windows(), T - th - tp + 1);
        ASSERT_EQ(d.windows(Split::train).size(), d.n_windows());
      }
      EXPECT_THROW(make_windows(s, th, T - th + 1, SplitFractions{1.0, 0.0, 0.0}), DataError);
    }
  }
}

TEST(Windows, NoWindowCrossesASplitBoundary) {
  const auto d = make_windows(ramp(500, 1), 12, 3);
  std::size_t used = 0;
  for (auto s : {Split::train, Split::val, Split::test}) {
    const auto [first, last] = d.step_range(s);
    for (auto w : d.windows(s)) {
      EXPECT_GE(w, first);
      EXPECT_LE(w + 15, last);
      EXPECT_EQ(d.split_of(w), s);
    }
    used += d.windows(s).size();
  }
  EXPECT_EQ(d.step_range(Split::train), (std::pair<std::size_t, std::size_t>{0, 350}));
  EXPECT_EQ(d.step_range(Split::val), (std::pair<std::size_t, std::size_t>{350, 400}));
  EXPECT_EQ(used + 2 * 14, d.n_windows());
  const auto& train = d.windows(Split::train);
  const auto& val = d.windows(Split::val);
  const auto& test = d.windows(Split::test);
  EXPECT_LT(train.back() + 14, val.front());
  EXPECT_LT(val.back() + 14, test.front());
}

TEST(Windows, LosslessReconstruction) {
  const auto s = ramp(60, 3);
  const auto d = make_windows(s, 5, 2, SplitFractions{1.0, 0.0, 0.0});
  std::vector<double> rebuilt;
  for (std::size_t w = 0; w < d.n_windows(); ++w) {
    const Tensor window = d.input(w);
    const auto in = window.data();
    const std::size_t take = w == 0 ? 5 : 1;
    const std::size_t from = w == 0 ? 0 : 4;
    rebuilt.insert(rebuilt.end(), in.begin() + from * 3, in.begin() + (from + take) * 3);
  }
  EXPECT_EQ(rebuilt, std::vector<double>(s.values.begin(), s.values.begin() + rebuilt.size()));
  EXPECT_EQ(rebuilt.size(), (60 - 2) * 3);
}

TEST(Windows, SlotOfLastInputStep) {
  const auto s = generate_synthetic(complete_graph(2), 700, 5.0, 1);
  const auto d = make_windows(s, 12, 3);
  EXPECT_EQ(d.slot(0), 11u);
  EXPECT_EQ(d.slot(277), 0u);
}

TEST(Windows, RejectsBadArguments) {
  EXPECT_THROW(make_windows(ramp(10, 1), 0, 3), ParameterError);
  EXPECT_THROW(make_windows(ramp(100, 1), 12, 3, SplitFractions{0.5, 0.1, 0.1}), ParameterError);
  EXPECT_THROW(make_windows(ramp(10, 1), 8, 3), DataError);
}

TEST(Normalizer, TrainStatisticsAndRoundTrip) {
  const auto raw = make_windows(generate_synthetic(erdos_renyi_geometric(15, 0.4, 3), 600, 5.0, 2), 12, 3);
  const auto d = normalize(raw);
  ASSERT_TRUE(d.normalizer().has_value());
  const auto& nz = *d.normalizer();
  const auto [first, last] = d.step_range(Split::train);
  double sum = 0.0, ss = 0.0;
  const auto count = static_cast<double>((last - first) * 15);
  for (std::size_t t = first; t < last; ++t) {
    for (std::size_t i = 0; i < 15; ++i) sum += d.value(t, i);
  }
  const double mean = sum / count;
  for (std::size_t t = first; t < last; ++t) {
    for (std::size_t i = 0; i < 15; ++i) ss += (d.value(t, i) - mean) * (d.value(t, i) - mean);
  }
  EXPECT_LE(std::abs(mean), 1e-9);
  EXPECT_LE(std::abs(std::sqrt(ss / count) - 1.0), 1e-9);
  for (std::size_t t = 0; t < d.n_steps(); ++t) {
    for (std::size_t i = 0; i < 15; ++i) {
      EXPECT_LE(std::abs(nz.invert(d.value(t, i)) - raw.value(t, i)), 1e-12);
      EXPECT_LE(std::abs(nz.invert(nz.apply(raw.value(t, i))) - raw.value(t, i)), 1e-12);
    }
  }
}

TEST(Normalizer, ConstantSeriesIsRejected) {
  TrafficSeries s;
  s.n_nodes = 2;
  s.n_steps = 50;
  s.values.assign(100, 3.0);
  EXPECT_THROW(normalize(make_windows(s, 4, 2)), DataError);
}

}  // namespace
}  // namespace stkd
