#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phr/model/network.hpp"
#include "phr/numerics/adam.hpp"

namespace phr::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

// "PHR1", version, count, then per tensor: u16 name length, name, u8 rank,
// u32 dims, u8 dtype (0 = f32), little-endian payload; CRC32 trailer over
// everything before it. All integers little-endian.
std::string encode_checkpoint(const std::vector<StoredTensor>& tensors);
// Throws FormatError on bad magic, version, dtype, truncation or CRC.
std::vector<StoredTensor> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> read_checkpoint(const std::filesystem::path& path);

// Model parameters under "param/", Adam moments under "adam/m/" and
// "adam/v/", and "meta/step" / "meta/channels".
std::vector<StoredTensor> snapshot(const TwoStageModel& model,
                                   const nn::AdamState<float>* adam = nullptr);

// Rebuilds a model (and optionally the optimizer state) from a snapshot.
// The model's channel ladder is taken from "meta/channels".
TwoStageModel restore_model(const std::vector<StoredTensor>& tensors);
void restore_adam(const std::vector<StoredTensor>& tensors, const TwoStageModel& model,
                  nn::AdamState<float>& adam);

void save_model(const std::filesystem::path& path, const TwoStageModel& model,
                const nn::AdamState<float>* adam = nullptr);
TwoStageModel load_model(const std::filesystem::path& path);

}  // namespace phr::model
