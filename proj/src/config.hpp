// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "simkernel.hpp"

namespace qmem {

inline constexpr int kConfigSchemaVersion = 1;

struct Fig2Settings {
  double delay = 500e-9;  // s
  double chi0 = 0.836;
  double excitation_slope = 1e4;  // 1/W
  std::vector<double> write_powers{1e-6, 2e-6, 3e-6, 4.5e-6, 6e-6, 8e-6};
  std::uint64_t trials = 10'000'000;
};

struct Fig3Settings {
  std::vector<double> read_powers{0.7e-6, 1e-6, 1.5e-6, 2e-6, 3e-6, 4e-6, 6e-6, 8e-6, 10e-6, 14e-6, 20e-6};
  double relative_noise = 0.05;
};

struct ReproduceSettings {
  std::uint64_t trials = 1'000'000;
  Fig2Settings fig2;
  Fig3Settings fig3;
};

struct RunConfig {
  sim::ExperimentConfig experiment;
  ReproduceSettings reproduce;
};

/// Parses and validates a configuration tree. Unknown keys, wrong types
/// and out-of-range values raise ErrorCode::kConfig naming the key path.
RunConfig config_from_json(const nlohmann::json& tree);
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);

/// Sets one value addressed by a dotted key path ("detection.read_background")
/// and re-validates.
void set_config_value(RunConfig& config, std::string_view key_path, const nlohmann::json& value);

}  // namespace qmem
