#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stkd/graph.hpp"
#include "stkd/tensor.hpp"

namespace stkd {

struct NamedParam {
  std::string name;
  Tensor value;
};

struct TeacherConfig {
  std::size_t n_nodes = 0;
  std::size_t history = 12;
  std::size_t horizon = 3;
  /// Number of spatio-temporal blocks; 0 leaves a per-node linear model.
  std::size_t blocks = 2;
  std::size_t hidden = 32;
  std::size_t kernel = 3;
  /// Width of the head's hidden layer; 0 makes the head a single linear map.
  std::size_t head_hidden = 128;
  /// Node embedding channels appended to every input step; 0 disables them.
  std::size_t embed_dim = 8;
  /// Appends the (sin, cos) time of day of every input step.
  bool time_features = true;
  /// The head also reads the block inputs, not only the last block.
  bool input_skip = true;
  std::size_t steps_per_day = 288;

  friend bool operator==(const TeacherConfig&, const TeacherConfig&) = default;
};

struct StudentConfig {
  std::size_t n_nodes = 0;
  std::size_t history = 12;
  std::size_t horizon = 3;
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  /// Node embedding width; 0 disables the embedding table.
  std::size_t embed_dim = 16;
  /// Width of the teacher representation the projection maps onto.
  std::size_t teacher_hidden = 32;
  std::size_t steps_per_day = 288;
  bool time_features = true;

  friend bool operator==(const StudentConfig&, const StudentConfig&) = default;
};

/// Graph-aware spatio-temporal teacher.
///
/// Input channels per step and node are the reading, optionally followed by
/// the node's embedding row and the step's time of day. Each block applies a causal gated temporal convolution
/// tanh(conv_a) ⊙ sigmoid(conv_b), then Â-message passing, a shared linear
/// map and relu. The head (optionally one relu hidden layer) reads every time
/// step of the last block, plus the input channels when input_skip is set,
/// for each node and emits the horizon.
class TeacherModel {
 public:
  explicit TeacherModel(TeacherConfig config);

  const TeacherConfig& config() const noexcept { return config_; }
  const std::vector<NamedParam>& params() const noexcept { return params_; }
  std::vector<NamedParam>& params() noexcept { return params_; }
  std::vector<Tensor> param_tensors() const;
  std::size_t param_count() const;

  /// Glorot-uniform weights, zero biases. Block b draws from a stream derived
  /// from (seed, b), so a deeper model shares its first blocks with a
  /// shallower one built from the same seed.
  void init_params(std::uint64_t seed);

  struct Output {
    /// [horizon x n] for a single window; [windows*n x horizon] for a batch.
    Tensor pred;
    /// reps[0] is the input history per node ([rows x history]); reps[b] for
    /// b >= 1 is block b's last-step representation ([rows x hidden]).
    std::vector<Tensor> reps;
  };

  /// window: [history x n x 1]; slot: time-of-day index of the window's last
  /// step. With message_passing off Â is skipped entirely, giving the
  /// graph-free temporal network.
  Output forward(Tape& tape, const NormalizedAdjacency& adj, const Tensor& window,
                 std::size_t slot, bool message_passing = true) const;
  /// windows: [B*history x n x 1], window-major; one slot per window (ignored
  /// without time features).
  Output forward_batch(Tape& tape, const NormalizedAdjacency& adj, const Tensor& windows,
                       std::span<const std::size_t> slots, bool message_passing = true) const;

  const Tensor& param(const std::string& name) const;

 private:
  TeacherConfig config_;
  std::vector<NamedParam> params_;
};

/// Graph-free per-node MLP student.
///
/// Node i sees only its own history, its embedding row and the time-of-day
/// pair (sin, cos); no adjacency enters any signature.
class StudentModel {
 public:
  explicit StudentModel(StudentConfig config);

  const StudentConfig& config() const noexcept { return config_; }
  const std::vector<NamedParam>& params() const noexcept { return params_; }
  std::vector<NamedParam>& params() noexcept { return params_; }
  std::vector<Tensor> param_tensors() const;
  std::size_t param_count() const;
  void init_params(std::uint64_t seed);

  struct Output {
    /// [horizon x n] for a single window; [windows*n x horizon] for a batch.
    Tensor pred;
    /// Penultimate representation Z, [rows x hidden].
    Tensor hidden;
    /// Z · P, [rows x teacher_hidden].
    Tensor projected;
  };

  /// window: [history x n x 1]; slot: time-of-day index in [0, steps_per_day).
  Output forward(Tape& tape, const Tensor& window, std::size_t slot) const;
  /// windows: [B*history x n x 1]; one slot per window.
  Output forward_batch(Tape& tape, const Tensor& windows, std::span<const std::size_t> slots) const;

  const Tensor& param(const std::string& name) const;

 private:
  StudentConfig config_;
  std::vector<NamedParam> params_;
};

/// Stacks dataset windows into the batch layout forward_batch expects.
Tensor stack_windows(std::span<const Tensor> windows);

}  // namespace stkd
