#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "json.hpp"
#include "lvst/data.hpp"
#include "lvst/model.hpp"
#include "lvst/params.hpp"

namespace lvst {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Normalizer normalizer;
  ParamStore params;
  nlohmann::json extra = nlohmann::json::object();  // free-form run metadata
};

// Layout, integers little-endian:
//   "LVST" | u32 version | u64 len | config JSON (len bytes) | u64 count |
//   count x ( u64 name_len | name | u64 rank | rank x u64 extent | f64 payload )
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lvst
