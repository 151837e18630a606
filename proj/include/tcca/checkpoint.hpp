#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "tcca/training.hpp"

namespace tcca {

// Raised when a checkpoint is unreadable or does not match the data or
// configuration it is used with.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointFormat = 1;

struct Checkpoint {
  Model model;
  AdamW optimizer;
  std::string data_signature;  // manifest hash of the training dataset
  int epoch = 0;
  std::string rng_state;
};

// Layout: "TCCA", u32 format, u32 length + JSON metadata (config, config
// hash, data signature, epoch, rng state, optimizer step), u32 record
// count, then records of (u32 name length, name, u32 rows, u32 cols,
// rows*cols little-endian f64 row-major). Parameters come first, then the
// optimizer moments as "adam.m/<name>" and "adam.v/<name>".
void save_checkpoint(const std::filesystem::path& path, const Model& model, const AdamW& optimizer,
                     const std::string& data_signature, int epoch, const std::string& rng_state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tcca
