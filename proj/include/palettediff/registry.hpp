#pragma once

// Immutable set of checkpoints loaded from a directory of *.ckpt files.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "palettediff/diffusion.hpp"

namespace palettediff {

struct RegistryEntry {
  std::string tag;  // variant name or "base"
  std::string id;   // file stem
  std::filesystem::path path;
  std::string content_hash;  // git blob id of the file
  std::shared_ptr<const Checkpoint> checkpoint;
};

class CheckpointRegistry {
 public:
  CheckpointRegistry() = default;
  /// A missing directory is an error; an empty one gives an empty registry.
  static CheckpointRegistry load_dir(const std::filesystem::path& dir);

  void add(std::string id, std::filesystem::path path, Checkpoint ckpt);

  /// Entries sorted by id.
  const std::vector<RegistryEntry>& entries() const { return entries_; }
  /// First entry (by id) with the given tag; null if none.
  const RegistryEntry* find(std::string_view tag) const;
  /// Throws missing_checkpoint.
  const Checkpoint& require(std::string_view tag) const;

 private:
  std::vector<RegistryEntry> entries_;
};

/// Value of PALETTEDIFF_CHECKPOINT_DIR, or empty.
std::filesystem::path default_checkpoint_dir();

}  // namespace palettediff
