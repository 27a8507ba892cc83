#include "csud/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"

namespace csud {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw InvalidInput("checkpoint: unsupported dtype");
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "f32") return torch::kFloat32;
  if (s == "f64") return torch::kFloat64;
  if (s == "i64") return torch::kInt64;
  throw IoError("checkpoint: unknown dtype '" + s + "'");
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void write_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  json header;
  header["config"] = json::parse(ckpt.config_json.empty() ? "{}" : ckpt.config_json);
  header["step"] = ckpt.step;
  header["phase_step"] = ckpt.phase_step;
  header["phase"] = ckpt.phase;
  header["rng"] = {{"seed", ckpt.rng_seed}, {"step", ckpt.step}};
  header["optimizer_steps"] = ckpt.optimizer_steps;

  std::vector<torch::Tensor> blobs;
  json index = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    auto c = t.detach().cpu().contiguous();
    const uint64_t nbytes = static_cast<uint64_t>(c.numel()) * c.element_size();
    index.push_back({{"name", name}, {"dtype", dtype_name(c.scalar_type())}, {"shape", c.sizes().vec()},
                     {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(c);
  }
  header["tensors"] = index;
  const auto header_text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    out.put('\n');
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& b : blobs) {
      out.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.numel() * b.element_size()));
    }
    if (!out) throw IoError("short write on checkpoint: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(kCheckpointMagic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic) - 1) != 0 ||
      magic[sizeof(kCheckpointMagic) - 1] != '\n') {
    throw IoError("not a CSUD1 checkpoint: " + path.string());
  }
  const uint64_t header_size = read_u64(in);
  std::string header_text(header_size, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw IoError("truncated checkpoint header: " + path.string());

  Checkpoint ckpt;
  try {
    const auto header = json::parse(header_text);
    ckpt.config_json = header.at("config").dump();
    ckpt.step = header.at("step").get<int64_t>();
    ckpt.phase_step = header.at("phase_step").get<int64_t>();
    ckpt.phase = header.at("phase").get<std::string>();
    ckpt.rng_seed = header.at("rng").at("seed").get<uint64_t>();
    ckpt.optimizer_steps = header.at("optimizer_steps").get<std::map<std::string, int64_t>>();
    const auto data_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype").get<std::string>())));
      const auto nbytes = entry.at("nbytes").get<uint64_t>();
      if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size()) {
        throw IoError("checkpoint: size mismatch for " + entry.at("name").get<std::string>());
      }
      in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
      in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!in) throw IoError("truncated checkpoint data: " + path.string());
      ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), t);
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace csud
