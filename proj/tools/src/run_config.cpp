#include "stkd/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <type_traits>
#include <sstream>
#include <nlohmann/json.hpp>

#include "stkd/error.hpp"

namespace stkd::cli {
namespace {

using json = nlohmann::ordered_json;

class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ParameterError("config: '" + path_ + "' must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ParameterError("config: unknown key '" + where(key) + "'");
    }
  }

  template <class U>
    requires std::is_unsigned_v<U> && (!std::is_same_v<U, bool>)
  void get(const std::string& key, U& out) {
    read(key, out, [](const json& v) { return v.is_number_unsigned(); }, "a non-negative integer");
  }
  void get(const std::string& key, int& out) { read(key, out, [](const json& v) { return v.is_number_integer(); }, "an integer"); }
  void get(const std::string& key, double& out) { read(key, out, [](const json& v) { return v.is_number(); }, "a number"); }
  void get(const std::string& key, bool& out) { read(key, out, [](const json& v) { return v.is_boolean(); }, "a boolean"); }
  void get(const std::string& key, std::string& out) { read(key, out, [](const json& v) { return v.is_string(); }, "a string"); }

  const json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <class T, class Pred>
  void read(const std::string& key, T& out, Pred ok, const char* expected) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!ok(*it)) throw ParameterError("config: '" + where(key) + "' must be " + expected);
    out = it->template get<T>();
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.get("lr", t.lr);
  s.get("epochs", t.epochs);
  s.get("patience", t.patience);
  s.get("batch_size", t.batch_size);
  s.get("clip_norm", t.clip_norm);
  s.get("windows_per_epoch", t.windows_per_epoch);
  s.get("seed", t.seed);
}

json train_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"epochs", t.epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"clip_norm", t.clip_norm},
          {"windows_per_epoch", t.windows_per_epoch},
          {"seed", t.seed}};
}

}  // namespace

RunConfig::RunConfig() {
  teacher.train.epochs = 6;
  teacher.train.lr = 2e-3;
  teacher.train.batch_size = 16;
  student.train.epochs = 30;
  student.train.batch_size = 32;
}

void RunConfig::override_seed(std::uint64_t seed) {
  data.seed = seed;
  teacher.train.seed = seed;
  student.train.seed = seed;
  oversmoothing.seed = seed;
}

void RunConfig::validate() const {
  if (data.source != "synthetic" && data.source != "csv") {
    throw ParameterError("config: data.source must be \"synthetic\" or \"csv\", got \"" + data.source + "\"");
  }
  if (data.source == "csv" && (data.readings_csv.empty() || data.edges_csv.empty())) {
    throw ParameterError("config: csv source needs data.readings_csv and data.edges_csv");
  }
  if (data.source == "synthetic") {
    if (data.n_nodes < 2) throw ParameterError("config: data.n_nodes must be >= 2");
    if (!(data.radius > 0.0 && data.radius <= 1.0)) throw ParameterError("config: data.radius must be in (0, 1]");
    if (!(data.amplitude_min >= 0.0 && data.amplitude_max >= data.amplitude_min)) {
      throw ParameterError("config: need 0 <= data.amplitude_min <= data.amplitude_max");
    }
    if (!(data.noise >= 0.0)) throw ParameterError("config: data.noise must be >= 0");
  }
  if (!(data.step_minutes > 0.0)) throw ParameterError("config: data.step_minutes must be positive");
  if (data.history == 0 || data.horizon == 0) throw ParameterError("config: data.T_h and data.T_p must be positive");
  for (double f : data.splits) {
    if (!(f >= 0.0)) throw ParameterError("config: data.splits entries must be >= 0");
  }
  if (std::abs(data.splits[0] + data.splits[1] + data.splits[2] - 1.0) > 1e-9) {
    throw ParameterError("config: data.splits must sum to 1");
  }
  if (teacher.hidden == 0 || teacher.kernel == 0) throw ParameterError("config: teacher.h_T and teacher.K_t must be positive");
  if (student.hidden == 0) throw ParameterError("config: student.h_S must be positive");
  teacher.train.validate();
  student.train.validate();
  distill.validate();
  if (distill.teacher_rep_layer == 0 || distill.teacher_rep_layer > static_cast<int>(teacher.blocks)) {
    if (distill.teacher_rep_layer != -1) {
      throw ParameterError("config: distill.teacher_rep_layer must be -1 or in [1, teacher.L]");
    }
  }
  if (bench.reps < 30) throw ParameterError("config: bench.reps must be >= 30");
  if (!std::is_sorted(oversmoothing.depths.begin(), oversmoothing.depths.end())) {
    throw ParameterError("config: oversmoothing.depths must be sorted ascending");
  }
  if (oversmoothing.n_nodes < 2) throw ParameterError("config: oversmoothing.n_nodes must be >= 2");
  if (output_dir.empty()) throw ParameterError("config: output_dir must not be empty");
}

TeacherConfig RunConfig::teacher_config(std::size_t n_nodes, std::size_t steps_per_day) const {
  TeacherConfig c;
  c.n_nodes = n_nodes;
  c.history = data.history;
  c.horizon = data.horizon;
  c.blocks = teacher.blocks;
  c.hidden = teacher.hidden;
  c.kernel = teacher.kernel;
  c.head_hidden = teacher.head_hidden;
  c.embed_dim = teacher.embed_dim;
  c.time_features = teacher.time_features;
  c.input_skip = teacher.input_skip;
  c.steps_per_day = steps_per_day;
  return c;
}

StudentConfig RunConfig::student_config(std::size_t n_nodes, std::size_t steps_per_day) const {
  StudentConfig c;
  c.n_nodes = n_nodes;
  c.history = data.history;
  c.horizon = data.horizon;
  c.hidden = student.hidden;
  c.hidden_layers = student.hidden_layers;
  c.embed_dim = student.embed_dim;
  c.teacher_hidden = teacher.hidden;
  c.steps_per_day = steps_per_day;
  c.time_features = student.time_features;
  return c;
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  {
    Section top(root, "");
    if (const json* d = top.child("data")) {
      Section s(*d, "data");
      s.get("source", cfg.data.source);
      s.get("readings_csv", cfg.data.readings_csv);
      s.get("edges_csv", cfg.data.edges_csv);
      s.get("n_nodes", cfg.data.n_nodes);
      s.get("n_steps", cfg.data.n_steps);
      s.get("step_minutes", cfg.data.step_minutes);
      s.get("radius", cfg.data.radius);
      s.get("alpha", cfg.data.alpha);
      s.get("noise", cfg.data.noise);
      s.get("amplitude_min", cfg.data.amplitude_min);
      s.get("amplitude_max", cfg.data.amplitude_max);
      s.get("T_h", cfg.data.history);
      s.get("T_p", cfg.data.horizon);
      s.get("seed", cfg.data.seed);
      if (const json* sp = s.child("splits")) {
        if (!sp->is_array() || sp->size() != 3 ||
            !std::all_of(sp->begin(), sp->end(), [](const json& v) { return v.is_number(); })) {
          throw ParameterError("config: 'data.splits' must be an array of three numbers");
        }
        for (std::size_t i = 0; i < 3; ++i) cfg.data.splits[i] = (*sp)[i].get<double>();
      }
    }
    if (const json* t = top.child("teacher")) {
      Section s(*t, "teacher");
      s.get("L", cfg.teacher.blocks);
      s.get("h_T", cfg.teacher.hidden);
      s.get("K_t", cfg.teacher.kernel);
      s.get("head_hidden", cfg.teacher.head_hidden);
      s.get("d_e", cfg.teacher.embed_dim);
      s.get("time_features", cfg.teacher.time_features);
      s.get("input_skip", cfg.teacher.input_skip);
      read_train(s, cfg.teacher.train);
    }
    if (const json* t = top.child("student")) {
      Section s(*t, "student");
      s.get("h_S", cfg.student.hidden);
      s.get("d_e", cfg.student.embed_dim);
      s.get("hidden_layers", cfg.student.hidden_layers);
      s.get("time_features", cfg.student.time_features);
      read_train(s, cfg.student.train);
    }
    if (const json* t = top.child("distill")) {
      Section s(*t, "distill");
      s.get("lambda_spatial", cfg.distill.lambda_spatial);
      s.get("lambda_temporal", cfg.distill.lambda_temporal);
      s.get("tau", cfg.distill.temperature);
      s.get("rho", cfg.distill.rho);
      s.get("teacher_rep_layer", cfg.distill.teacher_rep_layer);
      std::string rho_mode = to_string(cfg.distill.rho_mode);
      std::string adaptive = to_string(cfg.distill.adaptive_mode);
      s.get("rho_mode", rho_mode);
      s.get("adaptive_mode", adaptive);
      cfg.distill.rho_mode = rho_mode_from(rho_mode);
      cfg.distill.adaptive_mode = adaptive_mode_from(adaptive);
    }
    if (const json* t = top.child("bench")) {
      Section s(*t, "bench");
      s.get("reps", cfg.bench.reps);
      s.get("warmup", cfg.bench.warmup);
    }
    if (const json* t = top.child("oversmoothing")) {
      Section s(*t, "oversmoothing");
      if (const json* d = s.child("depths")) {
        if (!d->is_array() ||
            !std::all_of(d->begin(), d->end(), [](const json& v) { return v.is_number_unsigned(); })) {
          throw ParameterError("config: 'oversmoothing.depths' must be an array of non-negative integers");
        }
        cfg.oversmoothing.depths = d->get<std::vector<std::size_t>>();
      }
      s.get("n_nodes", cfg.oversmoothing.n_nodes);
      s.get("radius", cfg.oversmoothing.radius);
      s.get("T_h", cfg.oversmoothing.history);
      s.get("h_T", cfg.oversmoothing.hidden);
      s.get("K_t", cfg.oversmoothing.kernel);
      s.get("seed", cfg.oversmoothing.seed);
    }
    top.get("output_dir", cfg.output_dir);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const RunConfig& cfg) {
  const auto& d = cfg.data;
  json root;
  root["data"] = {{"source", d.source},
                  {"readings_csv", d.readings_csv},
                  {"edges_csv", d.edges_csv},
                  {"n_nodes", d.n_nodes},
                  {"n_steps", d.n_steps},
                  {"step_minutes", d.step_minutes},
                  {"radius", d.radius},
                  {"alpha", d.alpha},
                  {"noise", d.noise},
                  {"amplitude_min", d.amplitude_min},
                  {"amplitude_max", d.amplitude_max},
                  {"T_h", d.history},
                  {"T_p", d.horizon},
                  {"splits", d.splits},
                  {"seed", d.seed}};
  json teacher = {{"L", cfg.teacher.blocks},
                  {"h_T", cfg.teacher.hidden},
                  {"K_t", cfg.teacher.kernel},
                  {"head_hidden", cfg.teacher.head_hidden},
                  {"d_e", cfg.teacher.embed_dim},
                  {"time_features", cfg.teacher.time_features},
                  {"input_skip", cfg.teacher.input_skip}};
  teacher.update(train_json(cfg.teacher.train));
  root["teacher"] = teacher;
  json student = {{"h_S", cfg.student.hidden},
                  {"d_e", cfg.student.embed_dim},
                  {"hidden_layers", cfg.student.hidden_layers},
                  {"time_features", cfg.student.time_features}};
  student.update(train_json(cfg.student.train));
  root["student"] = student;
  root["distill"] = {{"lambda_spatial", cfg.distill.lambda_spatial},
                     {"lambda_temporal", cfg.distill.lambda_temporal},
                     {"tau", cfg.distill.temperature},
                     {"rho_mode", to_string(cfg.distill.rho_mode)},
                     {"rho", cfg.distill.rho},
                     {"adaptive_mode", to_string(cfg.distill.adaptive_mode)},
                     {"teacher_rep_layer", cfg.distill.teacher_rep_layer}};
  root["bench"] = {{"reps", cfg.bench.reps}, {"warmup", cfg.bench.warmup}};
  const auto& o = cfg.oversmoothing;
  root["oversmoothing"] = {{"depths", o.depths}, {"n_nodes", o.n_nodes}, {"radius", o.radius},
                           {"T_h", o.history},   {"h_T", o.hidden},     {"K_t", o.kernel},
                           {"seed", o.seed}};
  root["output_dir"] = cfg.output_dir;
  return root.dump(2) + "\n";
}

}  // namespace stkd::cli
