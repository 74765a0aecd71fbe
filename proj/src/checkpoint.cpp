#include "osda/checkpoint.hpp"

#include "osda/config.hpp"

#include <cstring>
#include <fstream>

namespace osda {

namespace {

constexpr char kMagic[8] = {'O', 'S', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxHeader = 1ull << 32;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::string header = ckpt.header.dump();
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, m] : ckpt.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string p = path.string();
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ContractError(p + ": not a checkpoint file");
  const auto version = take<std::uint32_t>(in, p);
  if (version != kCheckpointVersion)
    throw ContractError(p + ": checkpoint format version " + std::to_string(version) + ", this build reads version " +
                        std::to_string(kCheckpointVersion));
  const auto header_len = take<std::uint64_t>(in, p);
  if (header_len > kMaxHeader) throw ContractError(p + ": corrupt checkpoint header");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError(p + ": truncated checkpoint");

  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(p + ": corrupt checkpoint header: " + e.what());
  }
  const auto count = take<std::uint32_t>(in, p);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(in, p);
    if (len > 4096) throw ContractError(p + ": corrupt tensor name");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = take<std::uint64_t>(in, p);
    const auto cols = take<std::uint64_t>(in, p);
    if (rows > (1ull << 31) || cols > (1ull << 31) || rows * cols > (1ull << 34))
      throw ContractError(p + ": corrupt tensor shape for '" + name + "'");
    Matrix m(static_cast<long>(rows), static_cast<long>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw IoError(p + ": truncated checkpoint");
    ckpt.tensors.emplace(std::move(name), std::move(m));
  }
  return ckpt;
}

namespace {

void assign(const Checkpoint& ckpt, const std::string& name, Matrix& dst) {
  const Matrix& src = ckpt.tensor(name);
  if (src.rows() != dst.rows() || src.cols() != dst.cols())
    throw ContractError("checkpoint: tensor '" + name + "' has shape " + std::to_string(src.rows()) + "x" +
                        std::to_string(src.cols()) + ", expected " + std::to_string(dst.rows()) + "x" +
                        std::to_string(dst.cols()));
  dst = src;
}

}  // namespace

void store_model(Checkpoint& ckpt, OpenSetModel& model, const std::string& prefix) {
  for (auto& [name, p] : model.named_parameters()) ckpt.tensors[prefix + name] = p->value;
  for (auto& b : model.buffers()) ckpt.tensors[prefix + "buffer." + b.name] = *b.value;
}

void restore_model(const Checkpoint& ckpt, OpenSetModel& model, const std::string& prefix) {
  for (auto& [name, p] : model.named_parameters()) assign(ckpt, prefix + name, p->value);
  for (auto& b : model.buffers()) assign(ckpt, prefix + "buffer." + b.name, *b.value);
}

void store_sequential(Checkpoint& ckpt, nn::Sequential& net, const std::string& prefix) {
  for (auto& [name, p] : net.named_parameters()) ckpt.tensors[prefix + name] = p->value;
  for (auto& b : net.buffers()) ckpt.tensors[prefix + "buffer." + b.name] = *b.value;
}

void restore_sequential(const Checkpoint& ckpt, nn::Sequential& net, const std::string& prefix) {
  for (auto& [name, p] : net.named_parameters()) assign(ckpt, prefix + name, p->value);
  for (auto& b : net.buffers()) assign(ckpt, prefix + "buffer." + b.name, *b.value);
}

std::shared_ptr<OpenSetModel> load_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  try {
    const LabelSpace ls = label_space_from_json(ckpt.header.at("label_space"));
    const TrainConfig cfg = train_config_from_json(ckpt.header.at("config"));
    auto model = std::make_shared<OpenSetModel>(ls, cfg.backbone, cfg.seed);
    restore_model(ckpt, *model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": corrupt checkpoint header: " + e.what());
  }
}

}  // namespace osda
