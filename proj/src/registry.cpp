#include "palettediff/registry.hpp"

#include <algorithm>
#include <cstdlib>

#include "palettediff/error.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

CheckpointRegistry CheckpointRegistry::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::file_not_found, "checkpoint directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ckpt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  CheckpointRegistry reg;
  for (const auto& f : files) reg.add(f.stem().string(), f, load_checkpoint(f));
  return reg;
}

void CheckpointRegistry::add(std::string id, std::filesystem::path path, Checkpoint ckpt) {
  RegistryEntry e;
  e.tag = ckpt.tag();
  e.id = std::move(id);
  e.content_hash = path.empty() ? std::string() : git_blob_sha1_file(path.string());
  e.path = std::move(path);
  e.checkpoint = std::make_shared<const Checkpoint>(std::move(ckpt));
  const auto at = std::upper_bound(entries_.begin(), entries_.end(), e.id,
                                   [](const std::string& k, const RegistryEntry& x) { return k < x.id; });
  entries_.insert(at, std::move(e));
}

const RegistryEntry* CheckpointRegistry::find(std::string_view tag) const {
  for (const auto& e : entries_)
    if (e.tag == tag) return &e;
  return nullptr;
}

const Checkpoint& CheckpointRegistry::require(std::string_view tag) const {
  const RegistryEntry* e = find(tag);
  if (e == nullptr) throw Error(Errc::missing_checkpoint, "no checkpoint loaded for variant " + std::string(tag));
  return *e->checkpoint;
}

std::filesystem::path default_checkpoint_dir() {
  const char* v = std::getenv("PALETTEDIFF_CHECKPOINT_DIR");
  return v ? std::filesystem::path(v) : std::filesystem::path();
}

}  // namespace palettediff
