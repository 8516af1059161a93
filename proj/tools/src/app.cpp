#include "stkd/cli/app.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stkd/bench.hpp"
#include "stkd/checkpoint.hpp"
#include "stkd/error.hpp"
#include "stkd/eval.hpp"
#include "stkd/oversmoothing.hpp"
#include "stkd/train.hpp"

namespace stkd::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string config;
  std::string teacher_ckpt;
  std::string student_ckpt;
  bool no_kd = false;
  std::optional<std::uint64_t> seed;
};

struct Context {
  RunConfig cfg;
  fs::path out_dir;
  std::ostream& out;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw IoError("write failed for " + path.string());
}

json metrics_json(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json horizons = json::array();
  for (std::size_t h = 0; h < m.per_horizon.size(); ++h) {
    const auto& p = m.per_horizon[h];
    horizons.push_back({{"step", h + 1}, {"mae", p.mae}, {"rmse", p.rmse}, {"mape", opt(p.mape)}});
  }
  return {{"mae", m.mae},     {"rmse", m.rmse},     {"mape", opt(m.mape)},
          {"count", m.count}, {"masked", m.masked}, {"per_horizon", horizons}};
}

std::string history_jsonl(const TrainHistory& h) {
  std::string text;
  for (const auto& e : h.epochs) {
    const json row = {{"epoch", e.epoch},         {"train_loss", e.train_loss},
                      {"val_mae", e.val_mae},     {"pred_loss", e.pred_loss},
                      {"spatial_loss", e.spatial_loss}, {"temporal_loss", e.temporal_loss}};
    text += row.dump() + "\n";
  }
  return text;
}

json history_summary(const TrainHistory& h) {
  return {{"epochs_run", h.epochs.size()},
          {"best_epoch", h.best_epoch},
          {"best_val_mae", h.best_val_mae},
          {"early_stopped", h.early_stopped}};
}

MetricsReport test_metrics(const Tensor& pred, const WindowedDataset& data) {
  const auto& test = data.windows(Split::test);
  return compute_metrics(pred, gather_targets(data, test), data.normalizer().value_or(Normalizer{}));
}

MetricsReport evaluate(const TeacherModel& m, const PreparedData& p) {
  return test_metrics(predict(m, p.adj, p.dataset, p.dataset.windows(Split::test)), p.dataset);
}

MetricsReport evaluate(const StudentModel& m, const PreparedData& p) {
  return test_metrics(predict(m, p.dataset, p.dataset.windows(Split::test)), p.dataset);
}

void require_test_split(const PreparedData& p) {
  if (p.dataset.windows(Split::test).empty()) throw DataError("the test split holds no complete window");
}

fs::path ckpt_path(const std::string& flag, const fs::path& out_dir, const char* fallback) {
  return flag.empty() ? out_dir / fallback : fs::path(flag);
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " checkpoint not found: " + path.string());
}

void print_row(std::ostream& out, const std::string& name, const MetricsReport& m) {
  out << std::left << std::setw(14) << name << std::right << std::fixed << std::setprecision(4)
      << std::setw(10) << m.mae << std::setw(10) << m.rmse;
  if (m.mape) {
    out << std::setw(10) << *m.mape * 100.0 << "%";
  } else {
    out << std::setw(11) << "n/a";
  }
  out << "\n";
  out.unsetf(std::ios::floatfield);
}

void print_header(std::ostream& out) {
  out << std::left << std::setw(14) << "model" << std::right << std::setw(10) << "MAE" << std::setw(10)
      << "RMSE" << std::setw(11) << "MAPE" << "\n";
}

void check_dims(std::size_t model_nodes, std::size_t model_history, std::size_t model_horizon,
                const WindowedDataset& data, const char* what) {
  if (model_nodes != data.n_nodes() || model_history != data.history() || model_horizon != data.horizon()) {
    throw DimensionError(std::string(what) + " checkpoint does not match the configured data (nodes " +
                         std::to_string(model_nodes) + ", T_h " + std::to_string(model_history) + ", T_p " +
                         std::to_string(model_horizon) + ")");
  }
}

int cmd_gen_data(Context& ctx) {
  const auto& d = ctx.cfg.data;
  if (d.source != "synthetic") throw ParameterError("gen-data needs data.source = \"synthetic\"");
  const auto p = prepare_data(ctx.cfg);
  save_edge_csv(p.graph, ctx.out_dir / "graph_edges.csv");
  save_readings_csv(p.series, ctx.out_dir / "readings.csv");
  const json manifest = {
      {"generator", "geometric_graph_diffusion"},
      {"seed", d.seed},
      {"n_nodes", d.n_nodes},
      {"n_steps", d.n_steps},
      {"step_minutes", d.step_minutes},
      {"graph", {{"radius", d.radius}, {"edges", p.graph.edges().size()},
                 {"components", connected_components(p.graph)}}},
      {"params", {{"alpha", d.alpha}, {"noise", d.noise}, {"amplitude_min", d.amplitude_min},
                  {"amplitude_max", d.amplitude_max}}},
      {"files", {{"edges", "graph_edges.csv"}, {"readings", "readings.csv"}}}};
  write_text(ctx.out_dir / "manifest.json", manifest.dump(2) + "\n");
  ctx.out << "wrote " << d.n_nodes << " nodes x " << d.n_steps << " steps, " << p.graph.edges().size()
          << " edges to " << ctx.out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train_teacher(Context& ctx) {
  const auto p = prepare_data(ctx.cfg);
  require_test_split(p);
  TeacherModel teacher(ctx.cfg.teacher_config(p.dataset.n_nodes(), p.dataset.steps_per_day()));
  teacher.init_params(ctx.cfg.teacher.train.seed);
  TrainHistory history;
  try {
    history = train_teacher(teacher, ctx.cfg.teacher.train, p.dataset, p.adj);
  } catch (const DivergenceError&) {
    save_checkpoint(teacher, ctx.out_dir / "teacher.ckpt");
    throw;
  }
  save_checkpoint(teacher, ctx.out_dir / "teacher.ckpt");
  write_text(ctx.out_dir / "teacher_metrics.jsonl", history_jsonl(history));
  const auto test = evaluate(teacher, p);
  json report = {{"model", "teacher"}, {"param_count", teacher.param_count()}};
  report.update(history_summary(history));
  report["test"] = metrics_json(test);
  write_text(ctx.out_dir / "teacher_report.json", report.dump(2) + "\n");
  ctx.out << "teacher: " << teacher.param_count() << " parameters, " << history.epochs.size()
          << " epochs, best epoch " << history.best_epoch << "\n";
  print_header(ctx.out);
  print_row(ctx.out, "teacher", test);
  return kExitOk;
}

struct StudentRun {
  StudentModel model;
  TrainHistory history;
  MetricsReport test;
};

StudentRun run_student(const RunConfig& cfg, const DistillConfig& dcfg, const TeacherModel& teacher,
                       const PreparedData& p, const fs::path& ckpt, bool* diverged) {
  StudentModel student(cfg.student_config(p.dataset.n_nodes(), p.dataset.steps_per_day()));
  student.init_params(cfg.student.train.seed);
  TrainHistory history;
  try {
    history = distill_student(student, cfg.student.train, dcfg, teacher, p.dataset, p.adj);
  } catch (const DivergenceError&) {
    save_checkpoint(student, ckpt);
    *diverged = true;
    throw;
  }
  save_checkpoint(student, ckpt);
  const auto test = evaluate(student, p);
  return StudentRun{std::move(student), std::move(history), test};
}

int cmd_distill(Context& ctx, const Options& opt) {
  const auto p = prepare_data(ctx.cfg);
  require_test_split(p);
  const auto teacher_path = ckpt_path(opt.teacher_ckpt, ctx.out_dir, "teacher.ckpt");
  require_file(teacher_path, "teacher");
  const auto teacher = load_teacher(teacher_path);
  check_dims(teacher.config().n_nodes, teacher.config().history, teacher.config().horizon, p.dataset, "teacher");
  if (teacher.config().hidden != ctx.cfg.teacher.hidden) {
    throw DimensionError("teacher checkpoint has h_T = " + std::to_string(teacher.config().hidden) +
                         " but the config says " + std::to_string(ctx.cfg.teacher.hidden));
  }
  const auto teacher_test = evaluate(teacher, p);

  DistillConfig ablation = ctx.cfg.distill;
  ablation.lambda_spatial = 0.0;
  ablation.lambda_temporal = 0.0;
  bool diverged = false;
  const auto main_ckpt = opt.student_ckpt.empty() ? ctx.out_dir / "student.ckpt" : fs::path(opt.student_ckpt);

  json report = {{"teacher", {{"param_count", teacher.param_count()}, {"test", metrics_json(teacher_test)}}}};
  report["distill"] = json::parse(dump_config(ctx.cfg))["distill"];
  report["no_kd_flag"] = opt.no_kd;
  print_header(ctx.out);
  print_row(ctx.out, "teacher", teacher_test);

  if (opt.no_kd) {
    const auto plain = run_student(ctx.cfg, ablation, teacher, p, main_ckpt, &diverged);
    write_text(ctx.out_dir / "distill_metrics.jsonl", history_jsonl(plain.history));
    json s = {{"param_count", plain.model.param_count()}, {"test", metrics_json(plain.test)}};
    s.update(history_summary(plain.history));
    report["student_no_kd"] = s;
    report["student_kd"] = nullptr;
    report["mae"] = {{"teacher", teacher_test.mae}, {"student_no_kd", plain.test.mae}, {"student_kd", nullptr}};
    print_row(ctx.out, "student-noKD", plain.test);
  } else {
    const auto kd = run_student(ctx.cfg, ctx.cfg.distill, teacher, p, main_ckpt, &diverged);
    write_text(ctx.out_dir / "distill_metrics.jsonl", history_jsonl(kd.history));
    const auto plain = run_student(ctx.cfg, ablation, teacher, p, ctx.out_dir / "student_nokd.ckpt", &diverged);
    write_text(ctx.out_dir / "distill_nokd_metrics.jsonl", history_jsonl(plain.history));
    json s_plain = {{"param_count", plain.model.param_count()}, {"test", metrics_json(plain.test)}};
    s_plain.update(history_summary(plain.history));
    json s_kd = {{"param_count", kd.model.param_count()}, {"test", metrics_json(kd.test)}};
    s_kd.update(history_summary(kd.history));
    report["student_no_kd"] = s_plain;
    report["student_kd"] = s_kd;
    report["mae"] = {{"teacher", teacher_test.mae}, {"student_no_kd", plain.test.mae}, {"student_kd", kd.test.mae}};
    print_row(ctx.out, "student-noKD", plain.test);
    print_row(ctx.out, "student-KD", kd.test);
  }
  write_text(ctx.out_dir / "distill_report.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_eval(Context& ctx, const Options& opt) {
  const auto p = prepare_data(ctx.cfg);
  require_test_split(p);
  const auto teacher_path = ckpt_path(opt.teacher_ckpt, ctx.out_dir, "teacher.ckpt");
  const auto student_path = ckpt_path(opt.student_ckpt, ctx.out_dir, "student.ckpt");
  require_file(teacher_path, "teacher");
  require_file(student_path, "student");
  const auto teacher = load_teacher(teacher_path);
  const auto student = load_student(student_path);
  check_dims(teacher.config().n_nodes, teacher.config().history, teacher.config().horizon, p.dataset, "teacher");
  check_dims(student.config().n_nodes, student.config().history, student.config().horizon, p.dataset, "student");

  print_header(ctx.out);
  json models = json::object();
  const auto t = evaluate(teacher, p);
  models["teacher"] = {{"checkpoint", teacher_path.filename().string()},
                       {"param_count", teacher.param_count()},
                       {"test", metrics_json(t)}};
  print_row(ctx.out, "teacher", t);
  const auto s = evaluate(student, p);
  models["student"] = {{"checkpoint", student_path.filename().string()},
                       {"param_count", student.param_count()},
                       {"test", metrics_json(s)}};
  print_row(ctx.out, "student", s);
  const auto nokd_path = ctx.out_dir / "student_nokd.ckpt";
  if (opt.student_ckpt.empty() && fs::is_regular_file(nokd_path)) {
    const auto plain = load_student(nokd_path);
    check_dims(plain.config().n_nodes, plain.config().history, plain.config().horizon, p.dataset, "student");
    const auto m = evaluate(plain, p);
    models["student_no_kd"] = {{"checkpoint", nokd_path.filename().string()},
                               {"param_count", plain.param_count()},
                               {"test", metrics_json(m)}};
    print_row(ctx.out, "student-noKD", m);
  }
  const json report = {{"split", "test"}, {"windows", p.dataset.windows(Split::test).size()}, {"models", models}};
  write_text(ctx.out_dir / "eval_report.json", report.dump(2) + "\n");
  return kExitOk;
}

json series_json(const LatencySeries& s) {
  return {{"kind", s.kind},           {"n_nodes", s.n_nodes},   {"reps", s.reps},
          {"warmup", s.warmup},       {"median_ns", s.median_ns}, {"p10_ns", s.p10_ns},
          {"p90_ns", s.p90_ns}};
}

int cmd_bench(Context& ctx, const Options& opt) {
  const auto p = prepare_data(ctx.cfg);
  require_test_split(p);
  const auto teacher_path = ckpt_path(opt.teacher_ckpt, ctx.out_dir, "teacher.ckpt");
  const auto student_path = ckpt_path(opt.student_ckpt, ctx.out_dir, "student.ckpt");
  require_file(teacher_path, "teacher");
  require_file(student_path, "student");
  const auto teacher = load_teacher(teacher_path);
  const auto student = load_student(student_path);
  check_dims(teacher.config().n_nodes, teacher.config().history, teacher.config().horizon, p.dataset, "teacher");
  check_dims(student.config().n_nodes, student.config().history, student.config().horizon, p.dataset, "student");

  const auto w = p.dataset.windows(Split::test).front();
  const Tensor window = p.dataset.input(w);
  const auto slot = p.dataset.slot(w);
  const auto& b = ctx.cfg.bench;
  const auto report = bench_latency(teacher, student, p.adj, window, slot, b.reps, b.warmup);
  auto run_teacher = [&] {
    Tape tape = Tape::no_grad();
    (void)teacher.forward(tape, p.adj, window, slot);
  };
  const auto self = bench_pair(run_teacher, run_teacher, b.reps, b.warmup);
  const bool sane = self.speedup >= 0.8 && self.speedup <= 1.25;
  const json out = {{"teacher", series_json(report.baseline)},
                    {"student", series_json(report.candidate)},
                    {"speedup", report.speedup},
                    {"self_comparison", {{"ratio", self.speedup}, {"band", {0.8, 1.25}}, {"pass", sane}}}};
  write_text(ctx.out_dir / "bench_report.json", out.dump(2) + "\n");
  ctx.out << std::fixed << std::setprecision(3) << "teacher median " << report.baseline.median_ns / 1e6
          << " ms (p10 " << report.baseline.p10_ns / 1e6 << ", p90 " << report.baseline.p90_ns / 1e6 << ")\n"
          << "student median " << report.candidate.median_ns / 1e6 << " ms (p10 "
          << report.candidate.p10_ns / 1e6 << ", p90 " << report.candidate.p90_ns / 1e6 << ")\n"
          << "speedup " << report.speedup << "x, self-comparison " << self.speedup << (sane ? " ok" : " OUT OF BAND")
          << "\n";
  ctx.out.unsetf(std::ios::floatfield);
  return kExitOk;
}

int cmd_oversmoothing(Context& ctx) {
  const auto& o = ctx.cfg.oversmoothing;
  const auto g = erdos_renyi_geometric(o.n_nodes, o.radius, o.seed);
  OversmoothingConfig oc;
  oc.history = o.history;
  oc.hidden = o.hidden;
  oc.kernel = o.kernel;
  const auto table = oversmoothing_study(o.depths, g, o.seed, oc);
  std::string csv = "depth,mad\n";
  json rows = json::array();
  ctx.out << "depth  mad\n";
  for (const auto& r : table) {
    json row = {{"depth", r.depth}, {"mad", r.mad}, {"zero_rows", r.zero_rows}};
    rows.push_back(row);
    csv += std::to_string(r.depth) + "," + json(r.mad).dump() + "\n";
    ctx.out << std::setw(5) << r.depth << "  " << json(r.mad).dump() << "\n";
  }
  write_text(ctx.out_dir / "oversmoothing.csv", csv);
  const json report = {{"n_nodes", o.n_nodes},
                       {"radius", o.radius},
                       {"components", connected_components(g)},
                       {"seed", o.seed},
                       {"rows", rows}};
  write_text(ctx.out_dir / "oversmoothing.json", report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  PreparedData p;
  if (d.source == "csv") {
    p.series = load_readings_csv(d.readings_csv);
    p.graph = load_edge_csv(d.edges_csv, p.series.n_nodes);
  } else {
    p.graph = erdos_renyi_geometric(d.n_nodes, d.radius, d.seed);
    GeneratorParams gp;
    gp.alpha = d.alpha;
    gp.noise = d.noise;
    gp.amplitude_min = d.amplitude_min;
    gp.amplitude_max = d.amplitude_max;
    p.series = generate_synthetic(p.graph, d.n_steps, d.step_minutes, d.seed, gp);
  }
  p.adj = symmetric_normalize(p.graph);
  SplitFractions fr;
  fr.train = d.splits[0];
  fr.val = d.splits[1];
  fr.test = d.splits[2];
  p.dataset = normalize(make_windows(p.series, d.history, d.horizon, fr));
  return p;
}

fs::path effective_output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("STKD_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal knowledge distillation for traffic forecasting", "stkd"};
  app.require_subcommand(1, 1);
  Options opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub, bool ckpts) {
    sub->add_option("--config", opt.config, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Overrides every seed in the config");
    if (ckpts) {
      sub->add_option("--teacher-ckpt", opt.teacher_ckpt, "Teacher checkpoint");
      sub->add_option("--student-ckpt", opt.student_ckpt, "Student checkpoint");
    }
  };
  add_common(app.add_subcommand("gen-data", "Generate the synthetic graph and readings"), false);
  add_common(app.add_subcommand("train-teacher", "Train the graph teacher"), true);
  auto* distill = app.add_subcommand("distill", "Train the student against a frozen teacher");
  add_common(distill, true);
  distill->add_flag("--no-kd", opt.no_kd, "Ablation: force lambda_spatial = lambda_temporal = 0");
  add_common(app.add_subcommand("eval", "Test-split metrics for teacher and student"), true);
  add_common(app.add_subcommand("bench", "Teacher vs student inference latency"), true);
  add_common(app.add_subcommand("oversmoothing", "MAD of untrained teachers by depth"), false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (sub->count("--seed") > 0) opt.seed = seed;

  try {
    RunConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.override_seed(*opt.seed);
    Context ctx{cfg, effective_output_dir(cfg), out};
    ctx.cfg.output_dir = ctx.out_dir.string();
    ensure_dir(ctx.out_dir);
    write_text(ctx.out_dir / "config.resolved.json", dump_config(ctx.cfg));
    if (name == "gen-data") return cmd_gen_data(ctx);
    if (name == "train-teacher") return cmd_train_teacher(ctx);
    if (name == "distill") return cmd_distill(ctx, opt);
    if (name == "eval") return cmd_eval(ctx, opt);
    if (name == "bench") return cmd_bench(ctx, opt);
    return cmd_oversmoothing(ctx);
  } catch (const DivergenceError& e) {
    err << "error: training diverged in epoch " << e.epoch() << ": " << e.what()
        << " (best parameters saved)\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace stkd::cli
