#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "stkd/models.hpp"

namespace stkd {

// Binary checkpoint layout (all integers little-endian):
//   "STKD" | u32 version | u8 model kind | u32 length + JSON hyperparameters |
//   per parameter: u32 length + UTF-8 name, u8 rank, u32 dims..., f64 values...
// The parameter list is implied by the hyperparameters, so a file that ends
// early is detected as truncated.

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint8_t { teacher = 1, student = 2 };

std::string encode_checkpoint(const TeacherModel& model);
std::string encode_checkpoint(const StudentModel& model);
std::variant<TeacherModel, StudentModel> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const TeacherModel& model, const std::filesystem::path& path);
void save_checkpoint(const StudentModel& model, const std::filesystem::path& path);

ModelKind checkpoint_kind(const std::filesystem::path& path);
std::variant<TeacherModel, StudentModel> load_checkpoint(const std::filesystem::path& path);
/// Throws FormatError when the file holds the other model kind.
TeacherModel load_teacher(const std::filesystem::path& path);
StudentModel load_student(const std::filesystem::path& path);

}  // namespace stkd
