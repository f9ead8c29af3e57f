#include "tansens/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "tansens/binary_io.hpp"
#include "tansens/error.hpp"

namespace tansens {

void write_params(std::ostream& os, const Params& params) {
  params.check_consistent();
  os.write(kParamsMagic, sizeof kParamsMagic);
  binio::put<std::uint32_t>(os, kParamsVersion);
  binio::put<std::uint8_t>(os, params.spec.use_bias ? 1 : 0);
  for (int i = 0; i < 3; ++i) binio::put<std::uint8_t>(os, 0);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.spec.layer_sizes.size()));
  for (std::size_t s : params.spec.layer_sizes) binio::put<std::uint64_t>(os, s);
  for (std::size_t i = 0; i < params.depth(); ++i) {
    const Matrix& w = params.weights[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) binio::put<double>(os, w(r, c));
    }
    for (Eigen::Index c = 0; c < params.biases[i].size(); ++c) {
      binio::put<double>(os, params.biases[i][c]);
    }
  }
  if (!os) throw IoError("failed writing parameter stream");
}

Params read_params(std::istream& is) {
  char magic[sizeof kParamsMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kParamsMagic)) {
    throw FormatError("not a parameter checkpoint (bad magic)");
  }
  const auto version = binio::get<std::uint32_t>(is, "version");
  if (version != kParamsVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  NetworkSpec spec;
  spec.use_bias = binio::get<std::uint8_t>(is, "use_bias") != 0;
  for (int i = 0; i < 3; ++i) binio::get<std::uint8_t>(is, "padding");
  const auto n_sizes = binio::get<std::uint32_t>(is, "layer count");
  if (n_sizes < 2 || n_sizes > 4096) {
    throw FormatError("implausible layer count " + std::to_string(n_sizes));
  }
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    spec.layer_sizes.push_back(static_cast<std::size_t>(binio::get<std::uint64_t>(is, "layer size")));
  }
  Params p = Params::zeros(spec);
  for (std::size_t i = 0; i < p.depth(); ++i) {
    Matrix& w = p.weights[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = binio::get<double>(is, "weight");
    }
    for (Eigen::Index c = 0; c < p.biases[i].size(); ++c) {
      p.biases[i][c] = binio::get<double>(is, "bias");
    }
  }
  p.check_consistent();
  return p;
}

nlohmann::json params_to_json(const Params& params) {
  params.check_consistent();
  nlohmann::json j;
  j["format"] = "tansens-params";
  j["version"] = kParamsVersion;
  j["layer_sizes"] = params.spec.layer_sizes;
  j["use_bias"] = params.spec.use_bias;
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.depth(); ++i) {
    const Matrix& w = params.weights[i];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    j["weights"].push_back(flat);
    j["biases"].push_back(std::vector<double>(params.biases[i].begin(), params.biases[i].end()));
  }
  return j;
}

Params params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "tansens-params") {
      throw FormatError("JSON document is not a parameter checkpoint");
    }
    if (j.at("version").get<std::uint32_t>() != kParamsVersion) {
      throw FormatError("unsupported checkpoint version");
    }
    NetworkSpec spec;
    spec.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    spec.use_bias = j.at("use_bias").get<bool>();
    Params p = Params::zeros(spec);
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != p.depth() || bs.size() != p.depth()) {
      throw FormatError("weight/bias block count does not match layer_sizes");
    }
    for (std::size_t i = 0; i < p.depth(); ++i) {
      const auto flat = ws[i].get<std::vector<double>>();
      const auto bias = bs[i].get<std::vector<double>>();
      Matrix& w = p.weights[i];
      if (flat.size() != static_cast<std::size_t>(w.size()) ||
          bias.size() != static_cast<std::size_t>(p.biases[i].size())) {
        throw FormatError("block size mismatch in layer " + std::to_string(i + 1));
      }
      std::size_t at = 0;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[at++];
      }
      p.biases[i] = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    }
    p.check_consistent();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed parameter JSON: ") + e.what());
  }
}

void save_params(const std::filesystem::path& path, const Params& params, ParamsFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  if (format == ParamsFormat::json) {
    os << params_to_json(params).dump() << '\n';
  } else {
    write_params(os, params);
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Params load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  if (is.peek() == '{') {
    try {
      return params_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return read_params(is);
}

}  // namespace tansens
