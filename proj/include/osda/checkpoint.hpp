#pragma once

// Checkpoint files: "OSDACKPT", u32 format version, u64 header length, a JSON
// header, then named double tensors (u32 count; per tensor u32 name length,
// name, u64 rows, u64 cols, row-major little-endian doubles).

#include "osda/common.hpp"
#include "osda/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace osda {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  std::map<std::string, Matrix> tensors;

  const Matrix& tensor(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws IoError for unreadable or truncated files and ContractError for a
// foreign file or a different format version.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Model weights under `prefix` + parameter/buffer name.
void store_model(Checkpoint& ckpt, OpenSetModel& model, const std::string& prefix = "model.");
void restore_model(const Checkpoint& ckpt, OpenSetModel& model, const std::string& prefix = "model.");

void store_sequential(Checkpoint& ckpt, nn::Sequential& net, const std::string& prefix);
void restore_sequential(const Checkpoint& ckpt, nn::Sequential& net, const std::string& prefix);

// The model stored in a trainer checkpoint.
std::shared_ptr<OpenSetModel> load_model(const std::filesystem::path& path);

}  // namespace osda
