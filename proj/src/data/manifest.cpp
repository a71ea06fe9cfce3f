#include "phr/data/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "phr/common/error.hpp"
#include "phr/dsp/wav.hpp"

namespace phr::data {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool is_hex_digest(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::Clean ? "clean" : "noise"; }

std::string_view to_string(Subgenre genre) {
  switch (genre) {
    case Subgenre::Piano: return "piano";
    case Subgenre::Strings: return "strings";
    case Subgenre::Orchestral: return "orchestral";
    case Subgenre::Opera: return "opera";
  }
  return "?";
}

std::optional<Subgenre> parse_subgenre(std::string_view text) {
  for (Subgenre g : kAllSubgenres) {
    if (to_string(g) == text) return g;
  }
  return std::nullopt;
}

std::filesystem::path Manifest::resolve(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry& Manifest::find(std::string_view path) const {
  for (const auto& e : entries) {
    if (e.path == path) return e;
  }
  throw FormatError("manifest has no entry '" + std::string(path) + "'");
}

std::vector<const ManifestEntry*> Manifest::with_role(Role role) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.role == role) out.push_back(&e);
  }
  return out;
}

std::vector<const ManifestEntry*> Manifest::clean_of(Subgenre genre) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.role == Role::Clean && e.subgenre == genre) out.push_back(&e);
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

std::string format_manifest(const Manifest& manifest) {
  std::string out = "# path\trole\tduration_s\tsubgenre\tsha256\n";
  char duration[64];
  for (const auto& e : manifest.entries) {
    std::snprintf(duration, sizeof duration, "%.6f", e.duration);
    out += e.path;
    out += '\t';
    out += to_string(e.role);
    out += '\t';
    out += duration;
    out += '\t';
    out += e.subgenre ? to_string(*e.subgenre) : "-";
    out += '\t';
    out += e.sha256;
    if (e.needs_review) out += "\treview";
    out += '\n';
  }
  return out;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;

    const auto fail = [&](const std::string& why) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + why);
    };
    const auto f = split_tabs(line);
    if (f.size() != 5 && f.size() != 6) fail("expected 5 or 6 tab-separated fields");
    ManifestEntry e;
    e.path = std::string(f[0]);
    if (e.path.empty()) fail("empty path");
    if (f[1] == "clean") {
      e.role = Role::Clean;
    } else if (f[1] == "noise") {
      e.role = Role::Noise;
    } else {
      fail("role must be clean or noise");
    }
    const auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), e.duration);
    if (ec != std::errc() || ptr != f[2].data() + f[2].size() || !(e.duration >= 0.0)) {
      fail("bad duration '" + std::string(f[2]) + "'");
    }
    if (f[3] != "-") {
      e.subgenre = parse_subgenre(f[3]);
      if (!e.subgenre) fail("unknown subgenre '" + std::string(f[3]) + "'");
    }
    if (e.role == Role::Clean && !e.subgenre) fail("clean entry needs a subgenre");
    if (e.role == Role::Noise && e.subgenre) fail("noise entry cannot have a subgenre");
    if (!is_hex_digest(f[4])) fail("sha256 must be 64 lowercase hex digits");
    e.sha256 = std::string(f[4]);
    if (f.size() == 6) {
      if (f[5] != "review") fail("sixth field must be 'review'");
      e.needs_review = true;
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path, Verify verify) {
  Manifest m = parse_manifest(read_bytes(path), path.parent_path());
  if (verify == Verify::Yes) {
    for (const auto& e : m.entries) {
      const auto file = m.resolve(e);
      if (!std::filesystem::exists(file)) throw FormatError("missing file " + file.string());
      if (sha256_file(file) != e.sha256) throw FormatError("checksum mismatch for " + file.string());
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string text = format_manifest(manifest);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

ManifestEntry describe_file(const std::filesystem::path& file, const std::filesystem::path& base_dir,
                            Role role, std::optional<Subgenre> subgenre) {
  ManifestEntry e;
  const auto rel = std::filesystem::relative(file, base_dir.empty() ? "." : base_dir);
  const bool below = !rel.empty() && *rel.begin() != "..";
  e.path = (below ? rel : std::filesystem::absolute(file)).generic_string();
  e.role = role;
  e.subgenre = subgenre;
  e.duration = dsp::read_wav(file).duration();
  e.sha256 = sha256_file(file);
  return e;
}

dsp::AudioBuffer load_entry(const Manifest& manifest, const ManifestEntry& entry) {
  return dsp::read_wav(manifest.resolve(entry));
}

}  // namespace phr::data
