#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lbsim/rl/agent.hpp"

namespace lbsim::rl {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Everything needed to resume or evaluate a learner.
struct Checkpoint {
  Agent agent;
  std::uint64_t episode = 0;  // episodes trained so far
  std::string config_hash;    // hash of the environment + traffic config it was trained on
  std::string rng_state;      // textual std::mt19937_64 state, may be empty
};

/// JSON text: schema version, metadata block, per-layer row-major weights
/// (shortest round-trip decimal), optimizer moments. Round-trips bit-exactly.
std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws kParse on malformed input, kShape on inconsistent layer sizes and
/// kConfig on an unsupported schema version.
Checkpoint checkpoint_from_json(std::string_view text);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Throws kShape naming the first layer that does not fit the environment.
void check_compatible(const Agent& agent, std::size_t state_dim, const GroupSizes& groups);

}  // namespace lbsim::rl
