#include "phr/model/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "phr/common/error.hpp"

namespace phr::model {
namespace {

static_assert(std::numeric_limits<float>::is_iec559);

constexpr char kMagic[4] = {'P', 'H', 'R', '1'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

StoredTensor store(std::string name, const Tensor& t) {
  StoredTensor s;
  s.name = std::move(name);
  for (auto d : t.dims()) s.dims.push_back(static_cast<std::uint32_t>(d));
  s.values.assign(t.values().begin(), t.values().end());
  return s;
}

StoredTensor store_vector(std::string name, const std::vector<float>& v, const nn::Shape& dims) {
  StoredTensor s;
  s.name = std::move(name);
  for (auto d : dims) s.dims.push_back(static_cast<std::uint32_t>(d));
  s.values = v;
  return s;
}

std::map<std::string, const StoredTensor*> index(const std::vector<StoredTensor>& tensors) {
  std::map<std::string, const StoredTensor*> m;
  for (const auto& t : tensors)
    if (!m.emplace(t.name, &t).second) throw FormatError("duplicate tensor " + t.name);
  return m;
}

const StoredTensor& lookup(const std::map<std::string, const StoredTensor*>& m,
                           const std::string& name, const nn::Shape& dims) {
  const auto it = m.find(name);
  if (it == m.end()) throw FormatError("checkpoint lacks " + name);
  const StoredTensor& s = *it->second;
  nn::Shape got(s.dims.begin(), s.dims.end());
  if (got != dims)
    throw FormatError(name + ": stored shape " + nn::to_string(got) + ", model expects " +
                      nn::to_string(dims));
  return s;
}

}  // namespace

std::string encode_checkpoint(const std::vector<StoredTensor>& tensors) {
  std::string out(kMagic, 4);
  put_le(out, kCheckpointVersion, 4);
  put_le(out, tensors.size(), 4);
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long");
    if (t.dims.size() > 0xFF) throw std::invalid_argument("tensor rank too large");
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.values.size()) throw std::invalid_argument(t.name + ": dims do not match payload");
    put_le(out, t.name.size(), 2);
    out += t.name;
    put_le(out, t.dims.size(), 1);
    for (auto d : t.dims) put_le(out, d, 4);
    put_le(out, 0, 1);
    for (float v : t.values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  put_le(out, crc_of(out), 4);
  return out;
}

std::vector<StoredTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not a PHR1 checkpoint");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 4));
  if (tail.le(4) != crc_of(body)) throw FormatError("checkpoint CRC mismatch");

  Reader r(body);
  r.take(4);
  const auto version = r.le(4);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le(4);
  std::vector<StoredTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = std::string(r.take(r.le(2)));
    const auto rank = r.le(1);
    std::size_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      t.dims.push_back(static_cast<std::uint32_t>(r.le(4)));
      n *= t.dims.back();
    }
    const auto dtype = r.le(1);
    if (dtype != 0) throw FormatError(t.name + ": unknown dtype code " + std::to_string(dtype));
    if (n > r.remaining() / 4) throw FormatError("checkpoint truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.le(4)));
    out.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor");
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<StoredTensor>& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<StoredTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<StoredTensor> snapshot(const TwoStageModel& model, const nn::AdamState<float>* adam) {
  std::vector<StoredTensor> out;
  const auto& params = model.params().entries();
  std::vector<float> channels;
  for (auto c : model.config().channels) channels.push_back(static_cast<float>(c));
  out.push_back(store_vector("meta/channels", channels, {channels.size()}));
  for (const auto& p : params) out.push_back(store("param/" + p.name, p.tensor));
  if (adam) {
    if (adam->first_moment.size() != params.size())
      throw std::invalid_argument("optimizer state does not match the model");
    out.push_back(store_vector("meta/step", {static_cast<float>(adam->step)}, {1}));
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back(store_vector("adam/m/" + params[i].name, adam->first_moment[i], params[i].tensor.dims()));
      out.push_back(store_vector("adam/v/" + params[i].name, adam->second_moment[i], params[i].tensor.dims()));
    }
  }
  return out;
}

TwoStageModel restore_model(const std::vector<StoredTensor>& tensors) {
  const auto m = index(tensors);
  const auto it = m.find("meta/channels");
  if (it == m.end()) throw FormatError("checkpoint lacks meta/channels");
  ModelConfig cfg;
  cfg.channels.clear();
  for (float c : it->second->values) {
    if (!(c >= 1.0f) || c != std::floor(c)) throw FormatError("bad channel count in checkpoint");
    cfg.channels.push_back(static_cast<std::size_t>(c));
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  TwoStageModel model(cfg);
  for (auto& p : model.params().entries()) {
    const StoredTensor& s = lookup(m, "param/" + p.name, p.tensor.dims());
    std::copy(s.values.begin(), s.values.end(), p.tensor.mutable_values().begin());
  }
  return model;
}

void restore_adam(const std::vector<StoredTensor>& tensors, const TwoStageModel& model,
                  nn::AdamState<float>& adam) {
  const auto m = index(tensors);
  const auto& params = model.params().entries();
  const StoredTensor& step = lookup(m, "meta/step", {1});
  adam.step = static_cast<std::uint64_t>(step.values[0]);
  adam.first_moment.resize(params.size());
  adam.second_moment.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam.first_moment[i] = lookup(m, "adam/m/" + params[i].name, params[i].tensor.dims()).values;
    adam.second_moment[i] = lookup(m, "adam/v/" + params[i].name, params[i].tensor.dims()).values;
  }
}

void save_model(const std::filesystem::path& path, const TwoStageModel& model,
                const nn::AdamState<float>* adam) {
  write_checkpoint(path, snapshot(model, adam));
}

TwoStageModel load_model(const std::filesystem::path& path) {
  return restore_model(read_checkpoint(path));
}

}  // namespace phr::model
