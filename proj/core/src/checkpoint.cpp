#include "stkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "stkd/error.hpp"

namespace stkd {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'T', 'K', 'D'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

json to_json(const TeacherConfig& c) {
  return {{"n_nodes", c.n_nodes}, {"history", c.history}, {"horizon", c.horizon},
          {"blocks", c.blocks},   {"hidden", c.hidden},   {"kernel", c.kernel},
          {"head_hidden", c.head_hidden}, {"embed_dim", c.embed_dim},
          {"time_features", c.time_features}, {"input_skip", c.input_skip},
          {"steps_per_day", c.steps_per_day}};
}

json to_json(const StudentConfig& c) {
  return {{"n_nodes", c.n_nodes},
          {"history", c.history},
          {"horizon", c.horizon},
          {"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"embed_dim", c.embed_dim},
          {"teacher_hidden", c.teacher_hidden},
          {"steps_per_day", c.steps_per_day},
          {"time_features", c.time_features}};
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("checkpoint hyperparameters lack `") + key + "`");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint hyperparameter `") + key + "`: " + e.what());
  }
}

std::string encode(ModelKind kind, const json& hyper, const std::vector<NamedParam>& params) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.str(hyper.dump());
  for (const auto& p : params) {
    w.str(p.name);
    const auto& shape = p.value.shape();
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

void read_params(Reader& r, std::vector<NamedParam>& params) {
  for (auto& p : params) {
    const auto name = r.str();
    if (name != p.name) throw FormatError("checkpoint parameter `" + name + "` where `" + p.name + "` was expected");
    const auto rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != p.value.shape()) {
      throw FormatError("checkpoint parameter `" + name + "` has shape " + shape_str(shape) +
                        ", expected " + shape_str(p.value.shape()));
    }
    for (auto& v : p.value.mutable_data()) v = r.f64();
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::string encode_checkpoint(const TeacherModel& model) {
  return encode(ModelKind::teacher, to_json(model.config()), model.params());
}

std::string encode_checkpoint(const StudentModel& model) {
  return encode(ModelKind::student, to_json(model.config()), model.params());
}

std::variant<TeacherModel, StudentModel> decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic bytes");
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto kind = r.u8();
  json hyper;
  try {
    hyper = json::parse(r.str());
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint hyperparameters are not valid JSON: ") + e.what());
  }
  try {
    if (kind == static_cast<std::uint8_t>(ModelKind::teacher)) {
      TeacherConfig c;
      c.n_nodes = field<std::size_t>(hyper, "n_nodes");
      c.history = field<std::size_t>(hyper, "history");
      c.horizon = field<std::size_t>(hyper, "horizon");
      c.blocks = field<std::size_t>(hyper, "blocks");
      c.hidden = field<std::size_t>(hyper, "hidden");
      c.kernel = field<std::size_t>(hyper, "kernel");
      c.head_hidden = field<std::size_t>(hyper, "head_hidden");
      c.embed_dim = field<std::size_t>(hyper, "embed_dim");
      c.time_features = field<bool>(hyper, "time_features");
      c.input_skip = field<bool>(hyper, "input_skip");
      c.steps_per_day = field<std::size_t>(hyper, "steps_per_day");
      TeacherModel m(c);
      read_params(r, m.params());
      return m;
    }
    if (kind == static_cast<std::uint8_t>(ModelKind::student)) {
      StudentConfig c;
      c.n_nodes = field<std::size_t>(hyper, "n_nodes");
      c.history = field<std::size_t>(hyper, "history");
      c.horizon = field<std::size_t>(hyper, "horizon");
      c.hidden = field<std::size_t>(hyper, "hidden");
      c.hidden_layers = field<std::size_t>(hyper, "hidden_layers");
      c.embed_dim = field<std::size_t>(hyper, "embed_dim");
      c.teacher_hidden = field<std::size_t>(hyper, "teacher_hidden");
      c.steps_per_day = field<std::size_t>(hyper, "steps_per_day");
      c.time_features = field<bool>(hyper, "time_features");
      StudentModel m(c);
      read_params(r, m.params());
      return m;
    }
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint hyperparameters are invalid: ") + e.what());
  }
  throw FormatError("unknown model kind " + std::to_string(kind));
}

void save_checkpoint(const TeacherModel& model, const std::filesystem::path& path) {
  write_file(encode_checkpoint(model), path);
}

void save_checkpoint(const StudentModel& model, const std::filesystem::path& path) {
  write_file(encode_checkpoint(model), path);
}

ModelKind checkpoint_kind(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a checkpoint");
  }
  const auto kind = static_cast<std::uint8_t>(bytes[8]);
  if (kind != 1 && kind != 2) throw FormatError(path.string() + ": unknown model kind");
  return static_cast<ModelKind>(kind);
}

std::variant<TeacherModel, StudentModel> load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TeacherModel load_teacher(const std::filesystem::path& path) {
  auto any = load_checkpoint(path);
  if (auto* t = std::get_if<TeacherModel>(&any)) return std::move(*t);
  throw FormatError(path.string() + ": holds a student, expected a teacher");
}

StudentModel load_student(const std::filesystem::path& path) {
  auto any = load_checkpoint(path);
  if (auto* s = std::get_if<StudentModel>(&any)) return std::move(*s);
  throw FormatError(path.string() + ": holds a teacher, expected a student");
}

}  // namespace stkd
