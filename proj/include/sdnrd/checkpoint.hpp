// Binary checkpoints for networks and policies.
//
// Network blob (all integers little-endian, floats IEEE-754 binary64):
//   "SDNRDMLP"  u32 version  u32 scalar_bytes  u32 num_layers
//   per layer: u64 rows  u64 cols
//   u64 adam_step
//   parameters, first moments, second moments: each flattened layer by
//   layer as weight (column-major) then bias.
//
// Policy blob: "SDNRDPOL" u32 version f64 exploration_std u32 history_length
// followed by a network blob.

#ifndef SDNRD_CHECKPOINT_HPP_
#define SDNRD_CHECKPOINT_HPP_

#include "sdnrd/policy.hpp"

#include <filesystem>
#include <iosfwd>

namespace sdnrd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);

struct PolicyCheckpoint {
  PolicyConfig config;
  Network network;
};

void save_policy(std::ostream& out, const PolicyCheckpoint& policy);
PolicyCheckpoint load_policy(std::istream& in);

void save_network_file(const std::filesystem::path& path, const Network& net);
Network load_network_file(const std::filesystem::path& path);
void save_policy_file(const std::filesystem::path& path, const PolicyCheckpoint& policy);
PolicyCheckpoint load_policy_file(const std::filesystem::path& path);

}  // namespace sdnrd

#endif  // SDNRD_CHECKPOINT_HPP_
