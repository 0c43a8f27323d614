#pragma once

#include <string>

#include "rwgcn/network.hpp"

namespace rwgcn {

// Layout: 8-byte magic "RWGCNCK1", uint64 little-endian header length, the
// JSON header (architecture config, feedback variant, tensor manifest with
// name/shape/offset), then every tensor as little-endian float64 in
// manifest order. Offsets are relative to the start of the tensor blob.

std::string checkpoint_bytes(Network& net);
Network network_from_checkpoint_bytes(const std::string& bytes);

void save_checkpoint(Network& net, const std::string& path);
/// Throws DataError for unreadable or malformed files.
Network load_checkpoint(const std::string& path);

}  // namespace rwgcn
