#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pan/network.hpp"

namespace pan {

// Binary checkpoint layout (all integers and reals little-endian):
//
//   bytes  field
//   8      magic "PANCKPT1"
//   8      u64 seed
//   4      u32 PAN mode (0 off, 1 additive, 2 multiplicative)
//   8      f64 amplitude
//   8      f64 period
//   4      u32 L (number of weight layers)
//   4*(L+1) u32 layer widths J_0..J_L
//   L-1    u8 hidden activation (0 ReLU, 1 identity)
//   per layer l = 1..L: f64 W_l (row-major, J_l*J_{l-1}), f64 b_l (J_l)
//   4      u32 number of stored encodings (L-1 when PANs are on, else 0)
//   per stored encoding: f64 e_l (J_l)
//
// Encodings are stored rather than regenerated so hand-set fixtures survive
// a round trip bit-exactly.
struct Checkpoint {
    Mlp model;
    std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Throws FormatError for missing, truncated, or malformed files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pan
