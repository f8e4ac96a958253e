#pragma once

// On-disk snapshot registry. Layout:
//   <root>/registry.json
//   <root>/<role>/<version>/snapshot.json   (policy or external model descriptor)
//   <root>/<role>/<version>/manifest.json   (provenance)
// Entries are immutable and hash-checked on load.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spc/policy.hpp"

namespace spc {

struct ArtifactRef {
  std::string path;  // as recorded by the producer
  std::string sha256;

  bool operator==(const ArtifactRef&) const = default;
};

void to_json(json& j, const ArtifactRef& a);
void from_json(const json& j, ArtifactRef& a);

struct Provenance {
  std::optional<int> round;  // nullopt for initialization snapshots
  std::vector<std::string> parents;  // versions this one was trained from
  std::vector<ArtifactRef> datasets;  // dataset manifests used
  std::string note;

  bool operator==(const Provenance&) const = default;
};

void to_json(json& j, const Provenance& p);
void from_json(const json& j, Provenance& p);

struct SnapshotEntry {
  Role role = Role::Critic;
  std::string version;
  std::string kind;           // "toy-policy" or "external"
  std::string snapshot_path;  // relative to the registry root
  std::string snapshot_sha256;
  Provenance provenance;

  bool operator==(const SnapshotEntry&) const = default;
};

void to_json(json& j, const SnapshotEntry& e);
void from_json(const json& j, SnapshotEntry& e);

class SnapshotRegistry {
 public:
  // Opens an existing registry or starts an empty one at root.
  explicit SnapshotRegistry(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  bool contains(std::string_view version) const;
  const SnapshotEntry& entry(std::string_view version) const;  // RegistryError if absent
  std::vector<SnapshotEntry> entries() const;

  // Registering an existing version with identical content is a no-op;
  // different content is a RegistryError.
  const SnapshotEntry& register_policy(Role role, const std::string& version,
                                       const CategoricalPolicy& policy, const Provenance& prov);
  const SnapshotEntry& register_external(Role role, const std::string& version,
                                         const json& descriptor, const Provenance& prov);

  CategoricalPolicy load_policy(std::string_view version) const;
  json load_snapshot_json(std::string_view version) const;

  // Hashes of every snapshot plus the provenance DAG (parents must be
  // registered, no cycles). Throws RegistryError.
  void verify() const;

 private:
  const SnapshotEntry& add(Role role, const std::string& version, const std::string& kind,
                           const json& snapshot, const Provenance& prov);
  void save_index() const;

  std::filesystem::path root_;
  std::map<std::string, SnapshotEntry, std::less<>> entries_;
};

}  // namespace spc
