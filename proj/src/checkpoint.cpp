#include "cresp/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace cresp {

static constexpr char kMagic[8] = {'C', 'R', 'S', 'P', 'C', 'K', 'P', '1'};

std::ostringstream& CheckpointWriter::section(const std::string& name) {
  sections_.emplace_back(name, std::ostringstream(std::ios::binary));
  return sections_.back().second;
}

void CheckpointWriter::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  const uint32_t n = static_cast<uint32_t>(sections_.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& [name, body] : sections_) {
    const std::string payload = body.str();
    const uint32_t name_len = static_cast<uint32_t>(name.size());
    const int64_t size = static_cast<int64_t>(payload.size());
    os.write(reinterpret_cast<const char*>(&name_len), 4);
    os.write(name.data(), name_len);
    os.write(reinterpret_cast<const char*>(&size), 8);
    os.write(payload.data(), size);
  }
  if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 4);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    int64_t size = 0;
    is.read(reinterpret_cast<char*>(&size), 8);
    std::string payload(static_cast<size_t>(size), '\0');
    is.read(payload.data(), size);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    sections_[name] = std::move(payload);
  }
}

std::istringstream CheckpointReader::open(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end())
    throw std::runtime_error("checkpoint has no section '" + name + "'");
  return std::istringstream(it->second, std::ios::binary);
}

std::vector<std::string> CheckpointReader::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : sections_) out.push_back(k);
  return out;
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& kv,
                    const std::vector<const nn::ParamStore*>& stores) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open manifest for writing: " + path);
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  for (const auto* store : stores) {
    for (const auto& name : store->names()) {
      const auto& t = store->at(name);
      os << "tensor " << name << " shape " << nn::shape_str(t.shape) << " count "
         << t.numel() << "\n";
    }
  }
}

}  // namespace cresp
