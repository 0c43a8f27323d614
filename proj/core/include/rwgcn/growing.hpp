#pragma once

#include <cstdint>
#include <vector>

#include "rwgcn/network.hpp"

namespace rwgcn {

/// Blocks after which control feedback attaches: the last block of every
/// channel stage.
std::vector<std::size_t> control_attach_points(const NetworkConfig& config);

/// Attaches feedback modules with zero-initialized gates so the network's
/// outputs are unchanged. Consensus attaches nothing. Throws StateError if
/// feedback is already attached.
void grow_attach(Network& net, Variant variant, std::uint64_t seed = 0x5eedf00dULL);

}  // namespace rwgcn
