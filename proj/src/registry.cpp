#include "spc/registry.hpp"

#include <functional>

#include "spc/hash.hpp"
#include "spc/jsonl.hpp"

namespace spc {

namespace fs = std::filesystem;

void to_json(json& j, const ArtifactRef& a) { j = json{{"path", a.path}, {"sha256", a.sha256}}; }

void from_json(const json& j, ArtifactRef& a) {
  a.path = j.at("path").get<std::string>();
  a.sha256 = j.at("sha256").get<std::string>();
}

void to_json(json& j, const Provenance& p) {
  j = json{{"round", p.round ? json(*p.round) : json(nullptr)},
           {"parents", p.parents},
           {"datasets", p.datasets},
           {"note", p.note}};
}

void from_json(const json& j, Provenance& p) {
  p = Provenance{};
  if (j.contains("round") && !j["round"].is_null()) p.round = j["round"].get<int>();
  if (j.contains("parents")) p.parents = j["parents"].get<std::vector<std::string>>();
  if (j.contains("datasets")) p.datasets = j["datasets"].get<std::vector<ArtifactRef>>();
  p.note = j.value("note", "");
}

void to_json(json& j, const SnapshotEntry& e) {
  j = json{{"role", to_string(e.role)},
           {"version", e.version},
           {"kind", e.kind},
           {"snapshot_path", e.snapshot_path},
           {"snapshot_sha256", e.snapshot_sha256},
           {"provenance", e.provenance}};
}

void from_json(const json& j, SnapshotEntry& e) {
  e.role = parse_role(j.at("role").get<std::string>());
  e.version = j.at("version").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  e.snapshot_path = j.at("snapshot_path").get<std::string>();
  e.snapshot_sha256 = j.at("snapshot_sha256").get<std::string>();
  e.provenance = j.at("provenance").get<Provenance>();
}

SnapshotRegistry::SnapshotRegistry(fs::path root) : root_(std::move(root)) {
  auto index = root_ / "registry.json";
  if (!fs::exists(index)) return;
  auto j = read_json_file(index);
  for (const auto& e : j.at("entries")) {
    auto entry = e.get<SnapshotEntry>();
    entries_.emplace(entry.version, entry);
  }
}

bool SnapshotRegistry::contains(std::string_view version) const {
  return entries_.find(version) != entries_.end();
}

const SnapshotEntry& SnapshotRegistry::entry(std::string_view version) const {
  auto it = entries_.find(version);
  if (it == entries_.end())
    throw SpcError(ErrorCode::RegistryError, "unknown snapshot version: " + std::string(version));
  return it->second;
}

std::vector<SnapshotEntry> SnapshotRegistry::entries() const {
  std::vector<SnapshotEntry> out;
  for (const auto& [k, e] : entries_) out.push_back(e);
  return out;
}

const SnapshotEntry& SnapshotRegistry::add(Role role, const std::string& version,
                                           const std::string& kind, const json& snapshot,
                                           const Provenance& prov) {
  if (version.empty() || version.find('/') != std::string::npos)
    throw SpcError(ErrorCode::RegistryError, "bad snapshot version name: " + version);
  for (const auto& p : prov.parents)
    if (!contains(p)) throw SpcError(ErrorCode::RegistryError, version + ": unknown parent " + p);

  auto rel = fs::path(std::string(to_string(role))) / version / "snapshot.json";
  auto text = snapshot.dump(2) + "\n";
  auto sha = sha256_hex(text);
  SnapshotEntry e{role, version, kind, rel.generic_string(), sha, prov};

  if (auto it = entries_.find(version); it != entries_.end()) {
    if (it->second == e) return it->second;
    throw SpcError(ErrorCode::RegistryError, "snapshot " + version + " already registered with different content");
  }
  auto dir = root_ / rel.parent_path();
  fs::create_directories(dir);
  write_text_file(root_ / rel, text);
  json manifest = e;
  write_json_file(dir / "manifest.json", manifest);
  auto [it, _] = entries_.emplace(version, e);
  save_index();
  return it->second;
}

const SnapshotEntry& SnapshotRegistry::register_policy(Role role, const std::string& version,
                                                       const CategoricalPolicy& policy,
                                                       const Provenance& prov) {
  return add(role, version, "toy-policy", policy.to_json(), prov);
}

const SnapshotEntry& SnapshotRegistry::register_external(Role role, const std::string& version,
                                                         const json& descriptor,
                                                         const Provenance& prov) {
  return add(role, version, "external", descriptor, prov);
}

json SnapshotRegistry::load_snapshot_json(std::string_view version) const {
  const auto& e = entry(version);
  auto text = read_text_file(root_ / e.snapshot_path);
  if (sha256_hex(text) != e.snapshot_sha256)
    throw SpcError(ErrorCode::RegistryError, "hash mismatch for snapshot " + e.version);
  return json::parse(text);
}

CategoricalPolicy SnapshotRegistry::load_policy(std::string_view version) const {
  const auto& e = entry(version);
  if (e.kind != "toy-policy")
    throw SpcError(ErrorCode::RegistryError, "snapshot " + e.version + " is not a toy policy");
  return CategoricalPolicy::from_json(load_snapshot_json(version));
}

void SnapshotRegistry::verify() const {
  for (const auto& [v, e] : entries_) {
    load_snapshot_json(v);
    for (const auto& p : e.provenance.parents)
      if (!contains(p)) throw SpcError(ErrorCode::RegistryError, v + ": unknown parent " + p);
  }
  // Parents must be registered before children, so a cycle can only come
  // from a hand-edited index.
  std::map<std::string, int> state;
  std::function<void(const std::string&)> visit = [&](const std::string& v) {
    auto& s = state[v];
    if (s == 2) return;
    if (s == 1) throw SpcError(ErrorCode::RegistryError, "provenance cycle through " + v);
    s = 1;
    for (const auto& p : entry(v).provenance.parents) visit(p);
    s = 2;
  };
  for (const auto& [v, e] : entries_) visit(v);
}

void SnapshotRegistry::save_index() const {
  json arr = json::array();
  for (const auto& [v, e] : entries_) arr.push_back(e);
  fs::create_directories(root_);
  write_json_file(root_ / "registry.json", json{{"entries", arr}});
}

}  // namespace spc
