#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phr/dsp/audio.hpp"

namespace phr::data {

enum class Role { Clean, Noise };

enum class Subgenre { Piano, Strings, Orchestral, Opera };

inline constexpr Subgenre kAllSubgenres[] = {Subgenre::Piano, Subgenre::Strings,
                                             Subgenre::Orchestral, Subgenre::Opera};

std::string_view to_string(Role role);
std::string_view to_string(Subgenre genre);
std::optional<Subgenre> parse_subgenre(std::string_view text);

struct ManifestEntry {
  std::string path;  // as written; relative paths resolve against the manifest directory
  Role role = Role::Clean;
  double duration = 0.0;  // seconds
  std::optional<Subgenre> subgenre;  // clean entries only
  std::string sha256;  // lowercase hex
  // Extracted noise segments start out pending manual review.
  bool needs_review = false;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& entry) const;
  // Throws FormatError for an unknown key.
  const ManifestEntry& find(std::string_view path) const;
  std::vector<const ManifestEntry*> with_role(Role role) const;
  std::vector<const ManifestEntry*> clean_of(Subgenre genre) const;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Tab-separated: path, role, duration_s, subgenre or "-", sha256, and an
// optional sixth column "review". Lines starting with '#' are comments.
std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);

enum class Verify { No, Yes };

// Throws FormatError on malformed lines, missing files or (with
// Verify::Yes) checksum mismatches.
Manifest read_manifest(const std::filesystem::path& path, Verify verify = Verify::Yes);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Builds an entry for an existing WAV file, reading its duration and
// checksum. `path` is stored relative to `base_dir` when it lies below it.
ManifestEntry describe_file(const std::filesystem::path& file, const std::filesystem::path& base_dir,
                            Role role, std::optional<Subgenre> subgenre = std::nullopt);

dsp::AudioBuffer load_entry(const Manifest& manifest, const ManifestEntry& entry);

}  // namespace phr::data
