#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "tvc/nn.hpp"

namespace tvc::io {

// ===== Checkpoints =====
//
// Binary layout (integers little-endian):
//   "TVCK" | u32 version | model spec (u32 input_dim, u32 n_hidden,
//   u32 hidden..., u32 num_classes, u8 activation) | u32 n_entries |
//   entries (u16 name_len, name, u8 kind, u32 rows, u32 cols) |
//   u64 value_count | f32 values... | u32 crc32(payload bytes)

inline constexpr char kCheckpointMagic[4] = {'T', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc {
    io_error,
    bad_magic,
    bad_version,
    truncated,
    checksum_mismatch,
    shape_mismatch,
};

std::string to_string(CheckpointErrc e);

class CheckpointError : public std::runtime_error {
  public:
    CheckpointError(CheckpointErrc code, const std::string& msg)
        : std::runtime_error(to_string(code) + ": " + msg), code_(code) {}
    CheckpointErrc code() const { return code_; }

  private:
    CheckpointErrc code_;
};

struct Checkpoint {
    nn::ModelSpec spec;
    nn::ParamVector theta;  // values roundtrip at f32 precision
};

void save_checkpoint(const std::filesystem::path& path, const nn::ModelSpec& spec,
                     const nn::ParamVector& theta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ===== IDX image/label files =====

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // ubyte, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // ubyte, 1 dim

enum class IdxErrc {
    io_error,
    bad_magic,
    truncated,
    count_mismatch,
};

std::string to_string(IdxErrc e);

class IdxError : public std::runtime_error {
  public:
    IdxError(IdxErrc code, const std::string& msg)
        : std::runtime_error(to_string(code) + ": " + msg), code_(code) {}
    IdxErrc code() const { return code_; }

  private:
    IdxErrc code_;
};

// Loads an images/labels pair (big-endian headers), flattens each image to
// rows*cols doubles scaled into [0, 1]. Throws IdxError on malformed input
// or when the two files disagree on the sample count.
nn::Dataset load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

}  // namespace tvc::io
