#pragma once

// Params serialization.
//
// Binary layout (all integers and doubles little-endian):
//   8  bytes  magic "TSNSPRM\0"
//   u32       format version (1)
//   u8        use_bias
//   3  bytes  zero padding
//   u32       number of layer sizes L
//   L x u64   layer sizes
//   per layer i: N_{i-1}*N_i f64 weights (row-major, row = source node),
//                N_i f64 biases (zeros for biasless networks)
//
// JSON layout:
//   {"format": "tansens-params", "version": 1, "layer_sizes": [...],
//    "use_bias": bool, "weights": [[row-major...], ...], "biases": [[...], ...]}

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "tansens/network.hpp"

namespace tansens {

inline constexpr char kParamsMagic[8] = {'T', 'S', 'N', 'S', 'P', 'R', 'M', '\0'};
inline constexpr std::uint32_t kParamsVersion = 1;

enum class ParamsFormat { binary, json };

void write_params(std::ostream& os, const Params& params);
Params read_params(std::istream& is);

nlohmann::json params_to_json(const Params& params);
Params params_from_json(const nlohmann::json& j);

void save_params(const std::filesystem::path& path, const Params& params,
                 ParamsFormat format = ParamsFormat::binary);

/// Detects the format from the first byte ('{' means JSON).
Params load_params(const std::filesystem::path& path);

}  // namespace tansens
