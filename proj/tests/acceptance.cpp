// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>
#include <unistd.h>

#include "stkd/bench.hpp"
#include "stkd/cli/app.hpp"
#include "stkd/cli/run_config.hpp"
#include "stkd/distill.hpp"
#include "stkd/eval.hpp"
#include "stkd/grad_check.hpp"
#include "stkd/ops.hpp"
#include "stkd/oversmoothing.hpp"
#include "stkd/rng.hpp"
#include "stkd/train.hpp"

namespace {

using namespace stkd;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

Tensor rand_t(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0, bool grad = true) {
  Rng rng(seed, 7);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), v, grad);
}

bool same_bits(const std::vector<NamedParam>& a, const std::vector<NamedParam>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].value.data(), y = b[i].value.data();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// 1 -------------------------------------------------------------------------

Verdict gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto probe = [](Tape& t, const Tensor& y) {
    const Tensor w = rand_t({y.numel()}, 99, 0.5, 1.5, false);
    return sum(t, mul(t, reshape(t, y, {y.numel()}), w));
  };
  auto check = [&](const std::string& name, const std::function<Tensor(Tape&)>& f, std::vector<Tensor> ps) {
    const double e = grad_check([&](Tape& t) { return probe(t, f(t)); }, ps, 1e-5);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };
  Tensor a = rand_t({3, 4}, 1), b = rand_t({3, 4}, 2), m = rand_t({4, 5}, 3), bias = rand_t({5}, 4);
  Tensor x = rand_t({3, 5}, 5, -2, 2);
  check("matmul", [&](Tape& t) { return matmul(t, a, m); }, {a, m});
  check("linear", [&](Tape& t) { return linear(t, a, m, bias); }, {a, m, bias});
  check("add", [&](Tape& t) { return add(t, a, b); }, {a, b});
  check("sub", [&](Tape& t) { return sub(t, a, b); }, {a, b});
  check("mul", [&](Tape& t) { return mul(t, a, b); }, {a, b});
  check("relu", [&](Tape& t) { return relu(t, x); }, {x});
  check("sigmoid", [&](Tape& t) { return sigmoid(t, x); }, {x});
  check("tanh", [&](Tape& t) { return tanh(t, x); }, {x});
  check("abs", [&](Tape& t) { return stkd::abs(t, x); }, {x});
  check("square", [&](Tape& t) { return square(t, x); }, {x});
  check("scale", [&](Tape& t) { return scale(t, x, -1.5); }, {x});
  check("sum", [&](Tape& t) { return sum(t, x); }, {x});
  check("mean", [&](Tape& t) { return mean(t, x); }, {x});
  check("row_sum", [&](Tape& t) { return row_sum(t, x); }, {x});
  check("softmax", [&](Tape& t) { return softmax(t, x, 0.7); }, {x});
  check("log_softmax", [&](Tape& t) { return log_softmax(t, x, 2.0); }, {x});
  check("transpose", [&](Tape& t) { return transpose(t, x); }, {x});
  check("reshape", [&](Tape& t) { return reshape(t, x, {5, 3}); }, {x});
  Tensor v = rand_t({4}, 6);
  check("tile", [&](Tape& t) { return tile(t, v, 3); }, {v});
  check("concat_cols", [&](Tape& t) { return concat_cols(t, std::vector<Tensor>{a, b}); }, {a, b});
  const std::vector<std::size_t> rows{2, 0, 2};
  check("gather_rows", [&](Tape& t) { return gather_rows(t, x, rows); }, {x});
  Tensor s = rand_t({6, 2, 3}, 7);
  check("causal_unfold", [&](Tape& t) { return causal_unfold(t, s, 3, 2); }, {s});
  check("fold_time", [&](Tape& t) { return fold_time(t, s, 3); }, {s});
  Tensor cw = rand_t({9, 4}, 8), cb = rand_t({4}, 9);
  check("causal_conv", [&](Tape& t) { return causal_conv(t, s, cw, cb, 3); }, {s, cw, cb});
  Tensor g = rand_t({5, 6}, 10, -2, 2);
  check("tanh_sigmoid_gate", [&](Tape& t) { return tanh_sigmoid_gate(t, g); }, {g});
  const auto adj6 = symmetric_normalize(erdos_renyi_geometric(6, 0.6, 3));
  Tensor sx = rand_t({6, 3}, 11);
  check("spmm", [&](Tape& t) { return spmm(t, adj6, sx); }, {sx});

  // Full teacher forward + dual-level objective on 6 nodes, T_h = 4.
  TeacherConfig tc;
  tc.n_nodes = 6;
  tc.history = 4;
  tc.horizon = 2;
  tc.hidden = 3;
  tc.head_hidden = 4;
  tc.embed_dim = 2;
  tc.steps_per_day = 24;
  TeacherModel teacher(tc);
  teacher.init_params(9);
  const Tensor window = rand_t({4, 6, 1}, 12, -1, 1, false);
  const Tensor target = rand_t({2, 6}, 13, -1, 1, false);
  const Tensor ref_rep = rand_t({6, 3}, 14, -1, 1, false);
  const Tensor ref_pred = rand_t({2, 6}, 15, -1, 1, false);
  const std::vector<double> w{0.5, 1.0, 1.5, 1.0, 0.8, 1.2};
  DistillConfig dc;
  auto params = teacher.param_tensors();
  const double e = grad_check(
      [&](Tape& t) {
        const auto out = teacher.forward(t, adj6, window, 5);
        return total_loss(t, prediction_loss(t, out.pred, target), spatial_kd_loss(t, out.reps.back(), ref_rep, w),
                          temporal_kd_loss(t, out.pred, ref_pred, dc.temperature, w), dc);
      },
      params, 1e-5);
  if (e > worst) {
    worst = e;
    worst_name = "teacher+total_loss";
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 30.0, "max rel err " + fmt(worst, 3) + " (" + worst_name + ") <= 1e-5, " +
                                            fmt(secs, 3) + " s < 30 s"};
}

// 2 -------------------------------------------------------------------------

Verdict loss_identities() {
  Tape tape = Tape::no_grad();
  const Tensor p = rand_t({3, 5}, 21, -1, 1, false);
  const Tensor h = rand_t({5, 4}, 22, -1, 1, false);
  const std::vector<double> w(5, 1.0);
  const double pred0 = prediction_loss(tape, p, p).item();
  const double spat0 = spatial_kd_loss(tape, h, h, w).item();
  const double temp0 = temporal_kd_loss(tape, p, p, 2.0, w).item();
  const std::vector<double> one{1.0};
  // Teacher profile (0.75, 0.25), student (0.5, 0.5).
  const double kl = temporal_kd_loss(tape, Tensor::from({2, 1}, {0.0, 0.0}),
                                     Tensor::from({2, 1}, {std::log(0.75), std::log(0.25)}), 1.0, one)
                        .item();
  const double rho = 1.0;
  const std::vector<double> errors{0.0, rho * std::log(3.0)};
  const auto aw = adaptive_weights(errors, AdaptiveMode::error_softmax, rho).values;
  const bool zeros = pred0 == 0.0 && spat0 == 0.0 && temp0 == 0.0;
  const bool hand = std::abs(kl - 0.13081) <= 1e-4;
  const bool weights = std::abs(aw[0] - 1.5) <= 1e-9 && std::abs(aw[1] - 0.5) <= 1e-9;
  return {zeros && hand && weights, "perfect-match losses " + fmt(pred0) + "/" + fmt(spat0) + "/" + fmt(temp0) +
                                        ", temporal hand case " + fmt(kl, 6) + ", weights [" + fmt(aw[0], 12) +
                                        ", " + fmt(aw[1], 12) + "]"};
}

// Default-config study shared by criteria 3, 4 and 5 -------------------------

constexpr std::size_t kSeeds = 5;

struct Study {
  cli::RunConfig cfg;
  cli::PreparedData data;
  std::optional<TeacherModel> teacher;
  std::vector<StudentModel> kd, plain;
  std::vector<double> kd_mae, plain_mae;
  double teacher_mae = 0.0;
  double seconds = 0.0;
};

double test_mae(const Tensor& pred, const WindowedDataset& d) {
  const auto& w = d.windows(Split::test);
  return compute_metrics(pred, gather_targets(d, w), *d.normalizer()).mae;
}

Study& study() {
  static std::optional<Study> s;
  if (s) return *s;
  s.emplace();
  const auto t0 = Clock::now();
  auto& st = *s;
  st.data = cli::prepare_data(st.cfg);
  const auto& d = st.data.dataset;
  TeacherModel teacher(st.cfg.teacher_config(d.n_nodes(), d.steps_per_day()));
  teacher.init_params(st.cfg.teacher.train.seed);
  train_teacher(teacher, st.cfg.teacher.train, d, st.data.adj);
  st.teacher_mae = test_mae(predict(teacher, st.data.adj, d, d.windows(Split::test)), d);
  const auto targets = compute_teacher_targets(teacher, d, st.data.adj, st.cfg.distill.teacher_rep_layer);
  DistillConfig ablation = st.cfg.distill;
  ablation.lambda_spatial = 0.0;
  ablation.lambda_temporal = 0.0;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    auto tcfg = st.cfg.student.train;
    tcfg.seed = st.cfg.student.train.seed + k;
    for (bool with_kd : {false, true}) {
      StudentModel student(st.cfg.student_config(d.n_nodes(), d.steps_per_day()));
      student.init_params(tcfg.seed);
      distill_student(student, tcfg, with_kd ? st.cfg.distill : ablation, targets, d);
      const double mae = test_mae(predict(student, d, d.windows(Split::test)), d);
      (with_kd ? st.kd_mae : st.plain_mae).push_back(mae);
      (with_kd ? st.kd : st.plain).push_back(std::move(student));
      std::cout << "  seed " << tcfg.seed << (with_kd ? " KD    " : " no-KD ") << "test MAE " << fmt(mae, 6)
                << "\n"
                << std::flush;
    }
  }
  st.teacher.emplace(std::move(teacher));
  st.seconds = seconds_since(t0);
  return st;
}

// 3 -------------------------------------------------------------------------

Verdict ablation_inertness() {
  auto& st = study();
  const auto& d = st.data.dataset;
  StudentModel never(st.cfg.student_config(d.n_nodes(), d.steps_per_day()));
  never.init_params(st.cfg.student.train.seed);
  train_student(never, st.cfg.student.train, d);
  const bool same = same_bits(never.params(), st.plain.front().params());
  return {same, std::string("no-KD student ") + (same ? "bitwise identical to" : "differs from") +
                    " plain supervised training (seed " + std::to_string(st.cfg.student.train.seed) + ")"};
}

// 4 -------------------------------------------------------------------------

Verdict distillation_benefit() {
  auto& st = study();
  double kd = 0.0, plain = 0.0;
  std::size_t wins = 0;
  for (std::size_t k = 0; k < kSeeds; ++k) {
    kd += st.kd_mae[k] / kSeeds;
    plain += st.plain_mae[k] / kSeeds;
    if (st.kd_mae[k] < st.plain_mae[k]) ++wins;
  }
  const bool pass = kd < plain && wins >= 4 && st.seconds <= 600.0;
  return {pass, "teacher " + fmt(st.teacher_mae, 6) + ", mean MAE KD " + fmt(kd, 6) + " vs no-KD " + fmt(plain, 6) +
                    ", KD better on " + std::to_string(wins) + "/5 seeds (need 4), " + fmt(st.seconds, 4) +
                    " s <= 600 s"};
}

// 5 -------------------------------------------------------------------------

Verdict speedup() {
  auto& st = study();
  const auto& d = st.data.dataset;
  const auto w = d.windows(Split::test).front();
  const Tensor window = d.input(w);
  const auto slot = d.slot(w);
  const auto& b = st.cfg.bench;
  const auto report = bench_latency(*st.teacher, st.kd.front(), st.data.adj, window, slot, b.reps, b.warmup);
  auto run_teacher = [&] {
    Tape tape = Tape::no_grad();
    (void)st.teacher->forward(tape, st.data.adj, window, slot);
  };
  const auto self = bench_pair(run_teacher, run_teacher, b.reps, b.warmup);
  const bool band = self.speedup >= 0.8 && self.speedup <= 1.25;
  return {report.speedup >= 2.0 && band, "teacher/student median " + fmt(report.speedup, 4) + "x >= 2 (" +
                                             fmt(report.baseline.median_ns / 1e6, 4) + " ms vs " +
                                             fmt(report.candidate.median_ns / 1e6, 4) + " ms), self ratio " +
                                             fmt(self.speedup, 4) + " in [0.8, 1.25]"};
}

// 6 -------------------------------------------------------------------------

Verdict oversmoothing() {
  const cli::RunConfig cfg;
  const auto& o = cfg.oversmoothing;
  OversmoothingConfig oc;
  oc.history = o.history;
  oc.hidden = o.hidden;
  oc.kernel = o.kernel;
  const std::vector<std::size_t> depths{2, 8};
  std::size_t wins = 0, connected = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = erdos_renyi_geometric(o.n_nodes, o.radius, seed);
    if (connected_components(g) == 1) ++connected;
    const auto t = oversmoothing_study(depths, g, seed, oc);
    if (t[1].mad < t[0].mad) ++wins;
  }
  const std::vector<std::size_t> four{4};
  const double complete = oversmoothing_study(four, complete_graph(o.n_nodes), 42, oc)[0].mad;
  return {wins >= 18 && connected == 20 && complete <= 0.05,
          "MAD(8) < MAD(2) on " + std::to_string(wins) + "/20 seeds (need 18, " + std::to_string(connected) +
              " connected), complete-graph L=4 MAD " + fmt(complete, 3) + " <= 0.05"};
}

// 7 -------------------------------------------------------------------------

Verdict oracles() {
  Tape tape = Tape::no_grad();
  double spmm_err = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const std::size_t n = 8 * (seed + 1);
    const auto adj = symmetric_normalize(erdos_renyi_geometric(n, 0.3, seed));
    const Tensor x = rand_t({n, 5}, seed, -2, 2, false);
    const Tensor y = spmm(tape, adj, x);
    const auto got = y.data();
    const auto dense = adj.dense();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 5; ++c) {
        double ref = 0.0;
        for (std::size_t j = 0; j < n; ++j) ref += dense[i * n + j] * x.data()[j * 5 + c];
        spmm_err = std::max(spmm_err, std::abs(got[i * 5 + c] - ref));
      }
    }
  }

  double metric_err = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor pred = rand_t({4, 3, 6}, seed, -2, 2, false);
    const Tensor tgt = rand_t({4, 3, 6}, seed + 100, -2, 2, false);
    const Normalizer z{30.0, 9.0};
    const auto m = compute_metrics(pred, tgt, z);
    double abs_sum = 0.0, sq_sum = 0.0, pct = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double yp = z.invert(pred.data()[i]), yt = z.invert(tgt.data()[i]);
      abs_sum += std::abs(yp - yt);
      sq_sum += (yp - yt) * (yp - yt);
      if (std::abs(yt) >= kMapeMaskThreshold) {
        pct += std::abs(yp - yt) / std::abs(yt);
        ++kept;
      }
    }
    const double cnt = static_cast<double>(pred.numel());
    metric_err = std::max({metric_err, std::abs(m.mae - abs_sum / cnt), std::abs(m.rmse - std::sqrt(sq_sum / cnt)),
                           std::abs(*m.mape - pct / static_cast<double>(kept))});
  }

  TrafficSeries series;
  series.n_nodes = 4;
  series.n_steps = 60;
  Rng rng(5);
  for (std::size_t i = 0; i < 240; ++i) series.values.push_back(rng.uniform(0.0, 120.0));
  const auto nd = normalize(make_windows(series, 6, 2));
  double round_trip = 0.0;
  for (double v : series.values) round_trip = std::max(round_trip, std::abs(nd.normalizer()->invert(nd.normalizer()->apply(v)) - v));

  std::size_t cases = 0;
  bool formula = true;
  for (std::size_t T = 2; T <= 50; ++T) {
    TrafficSeries s;
    s.n_nodes = 1;
    s.n_steps = T;
    s.values.assign(T, 1.0);
    for (std::size_t th = 1; th < T; ++th) {
      for (std::size_t tp = 1; th + tp <= T; ++tp) {
        const auto d = make_windows(s, th, tp, SplitFractions{1.0, 0.0, 0.0});
        formula = formula && d.n_windows() == T - th - tp + 1;
        ++cases;
      }
    }
  }
  const bool pass = spmm_err <= 1e-12 && metric_err <= 1e-12 && round_trip <= 1e-12 && formula;
  return {pass, "spmm " + fmt(spmm_err, 3) + ", metrics " + fmt(metric_err, 3) + ", normalizer " +
                    fmt(round_trip, 3) + " (all <= 1e-12), window count " + (formula ? "exact" : "WRONG") +
                    " on " + std::to_string(cases) + " (T, T_h, T_p) cases"};
}

// 8 -------------------------------------------------------------------------

Verdict reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("stkd_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  cli::RunConfig cfg;
  cfg.data.n_nodes = 40;
  cfg.data.n_steps = 864;
  cfg.data.radius = 0.3;
  cfg.teacher.train.epochs = 2;
  cfg.teacher.train.windows_per_epoch = 128;
  cfg.student.train.epochs = 3;
  cfg.student.train.windows_per_epoch = 128;
  cfg.bench.reps = 30;
  {
    std::ofstream(root / "run.json") << cli::dump_config(cfg);
  }
  const std::vector<std::string> files{"graph_edges.csv",       "readings.csv",         "manifest.json",
                                       "teacher.ckpt",          "student.ckpt",         "student_nokd.ckpt",
                                       "teacher_metrics.jsonl", "distill_metrics.jsonl", "distill_nokd_metrics.jsonl",
                                       "teacher_report.json",   "distill_report.json",  "eval_report.json"};
  std::vector<std::string> runs[2];
  bool ok = true;
  for (int r = 0; r < 2; ++r) {
    const auto out = root / ("run" + std::to_string(r));
    ::setenv("STKD_OUTPUT_DIR", out.c_str(), 1);
    for (const char* cmd : {"gen-data", "train-teacher", "distill", "eval"}) {
      std::ostringstream sink, err;
      if (cli::run({cmd, "--config", (root / "run.json").string()}, sink, err) != cli::kExitOk) {
        std::cout << "  " << cmd << " failed: " << err.str();
        ok = false;
      }
    }
    for (const auto& f : files) runs[r].push_back(slurp(out / f));
  }
  ::unsetenv("STKD_OUTPUT_DIR");
  std::size_t same = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!runs[0][i].empty() && runs[0][i] == runs[1][i]) ++same;
  }
  fs::remove_all(root);
  return {ok && same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) +
                                          " checkpoint, data and metrics files bitwise identical across two runs"};
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient fidelity", gradient_fidelity},   {"loss identities", loss_identities},
      {"ablation inertness", ablation_inertness}, {"distillation benefit", distillation_benefit},
      {"speedup", speedup},                       {"over-smoothing", oversmoothing},
      {"oracle equivalences", oracles},           {"reproducibility", reproducibility}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << "criterion " << i + 1 << " " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << v.detail << "\n";
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed\n";
  return failed;
}
