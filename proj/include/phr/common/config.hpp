#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace phr {

// Line-oriented "key = value" text; '#' starts a comment, blank lines are
// skipped, keys may appear once.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text);
  static ConfigFile read(const std::filesystem::path& path);

  std::optional<std::string> get(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  // Throws FormatError naming the first key not in `known`.
  void require_known(std::initializer_list<std::string_view> known) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Strict numeric field parsing for config values; FormatError on junk.
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
std::vector<std::size_t> parse_size_list(std::string_view text, std::string_view what);

}  // namespace phr
