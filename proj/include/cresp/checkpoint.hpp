#pragma once
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cresp/params.hpp"

namespace cresp {

// Container for checkpoint files: a small binary format of named sections,
// each section an opaque byte payload (parameter records, rng states, buffer
// contents). Round trips are bit-exact.
class CheckpointWriter {
 public:
  std::ostringstream& section(const std::string& name);
  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::ostringstream>> sections_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::string& path);
  bool has(const std::string& name) const { return sections_.count(name) > 0; }
  std::istringstream open(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::string> sections_;
};

// Plain-text manifest next to a checkpoint: key = value lines followed by
// one line per parameter slice (name, shape, element count).
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& kv,
                    const std::vector<const nn::ParamStore*>& stores);

}  // namespace cresp
