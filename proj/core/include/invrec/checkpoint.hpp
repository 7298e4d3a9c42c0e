#pragma once

// Binary container for named float64 arrays ("IRLR" format, version 1):
//
//   magic "IRLR" | u32 version | u32 count
//   count x { u16 name_len | name (UTF-8) | u8 rank | rank x u32 dim | values }
//   u32 CRC32 of every preceding byte
//
// Integers and IEEE-754 doubles are little-endian; values are row-major.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "invrec/expert.hpp"
#include "invrec/numeric.hpp"
#include "invrec/policy.hpp"
#include "invrec/discriminator.hpp"

namespace invrec::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // row-major

  std::size_t expected_size() const;
};

using ArraySet = std::vector<NamedArray>;

std::vector<std::uint8_t> encode_checkpoint(const ArraySet& arrays);
ArraySet decode_checkpoint(std::span<const std::uint8_t> bytes);

// Atomic: writes a sibling temp file, then renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const ArraySet& arrays);
ArraySet load_checkpoint(const std::filesystem::path& path);

const NamedArray* find_array(const ArraySet& arrays, const std::string& name);
const NamedArray& require_array(const ArraySet& arrays, const std::string& name);

NamedArray from_matrix(std::string name, const numeric::Matrix& m);
NamedArray from_vector(std::string name, const numeric::Vector& v);
numeric::Matrix to_matrix(const NamedArray& a);
numeric::Vector to_vector(const NamedArray& a);

// prefix.W0, prefix.b0, prefix.W1, ...
void append_mlp(ArraySet& out, const std::string& prefix, const numeric::MLPParams& mlp);
numeric::MLPParams read_mlp(const ArraySet& in, const std::string& prefix, numeric::Head head);

void append_actor(ArraySet& out, const policy::ActorParams& actor);  // actor.*
policy::ActorParams read_actor(const ArraySet& in);
void append_critic(ArraySet& out, const policy::CriticParams& critic);  // critic.*
policy::CriticParams read_critic(const ArraySet& in);
void append_disc(ArraySet& out, const disc::DiscParams& d);  // disc.*
disc::DiscParams read_disc(const ArraySet& in);

// expert.states, expert.actions, expert.meta = (seed, episodes, mean_env_reward, mean_ctr)
void append_expert_dataset(ArraySet& out, const expert::ExpertDataset& ds);
expert::ExpertDataset read_expert_dataset(const ArraySet& in);

// ddpg.actor.*, ddpg.critic.*, ddpg.actor_target.*, ddpg.critic_target.*
void append_ddpg(ArraySet& out, const expert::DDPGNets& nets);
expert::DDPGNets read_ddpg(const ArraySet& in);

}  // namespace invrec::io
