#ifndef DWCAPS_CHECKPOINT_HPP_
#define DWCAPS_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "dwcaps/model.hpp"

namespace dwcaps {

// Binary container: "DWCP" magic, format version, scalar width, variant
// name, capsule configuration, then each named weight tensor (name, dims,
// raw little-endian values) and a trailing CRC-32 of everything before it.
// A save -> load -> save round trip is byte-identical.

// Returns the CRC-32 of the written payload (the run record's model
// checksum).
template <class T>
std::uint32_t save_checkpoint(const ModelGraph<T>& model,
                              const std::string& path);

// Rebuilds the variant recorded in the header and restores its weights.
template <class T>
ModelGraph<T> load_checkpoint(const std::string& path);

// Restores weights into an existing model; the checkpoint header must name
// the same variant the model was built from.
template <class T>
void restore_weights(ModelGraph<T>& model, const std::string& path);

// Header peek without loading tensors: variant name and scalar width in
// bytes (4 = float, 8 = double).
struct CheckpointInfo {
  std::string variant;
  CapsuleConfig caps;
  int scalar_width = 0;
};
CheckpointInfo checkpoint_info(const std::string& path);

}  // namespace dwcaps

#endif  // DWCAPS_CHECKPOINT_HPP_
