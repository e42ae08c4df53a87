// SPDX-License-Identifier: Apache-2.0
//
// Orchestration: simulation runs, the figure reproductions and event-file
// analysis, each rendered as a bundle of named text artifacts (CSV tables
// and a JSON summary) for the caller to write out.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "estimators.hpp"
#include "fitting.hpp"
#include "ingest.hpp"

namespace qmem::pipeline {

inline constexpr int kSummarySchemaVersion = 1;

struct Artifact {
  std::string name;
  std::string content;
  friend bool operator==(const Artifact&, const Artifact&) = default;
};
using Bundle = std::vector<Artifact>;

/// Every estimate derivable from one delay's counts; absent when the counts
/// cannot support it (e.g. no unconditional reads in feedback mode).
struct DelayEstimates {
  double storage_time = 0;
  std::optional<EstimateWithError> p_w, p_r, p_bg, R, g2, Rc, chi, chi_raw, alpha;
  std::optional<EstimateWithError> herald_probability;
  std::optional<est::BellFigures> bell;
};

EstimateWithError eta_tot(const phys::DetectionChain& detection);

/// `external_p_r` supplies p_r when the counts did not measure it.
DelayEstimates estimate_delay(const sim::Counts& counts, const phys::DetectionChain& detection,
                              std::optional<double> write_power,
                              const std::optional<EstimateWithError>& external_p_r = std::nullopt);

struct SimulateResult {
  sim::CountsTable counts;
  std::optional<sim::CountsTable> companion;  // correlation run feeding p_r in feedback mode
  std::vector<DelayEstimates> estimates;
};

SimulateResult simulate(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers);
Bundle render_simulation(const RunConfig& config, const SimulateResult& result, std::uint64_t trials,
                         std::uint64_t seed);

struct Fig2Row {
  double write_power = 0;
  double mu = 0;
  DelayEstimates estimates;
  EstimateWithError mu_estimate;
};

struct Fig2Result {
  std::vector<Fig2Row> rows;
  fit::FitResult excitation_fit;  // mu_estimate vs write power, with intercept
  double chi_mean = 0;
  double chi_max_relative_deviation = 0;
  double g2_min = 0;
  bool g2_strictly_decreasing = false;
};

struct Fig3Result {
  fit::DataSeries widths;
  fit::FitResult fit;
};

struct Fig4Result {
  std::vector<DelayEstimates> rows;
  fit::FitResult lifetime_fit;  // Rc(t) = R0 exp(-t / tau)
  std::optional<EstimateWithError> chi_t0;
};

Fig2Result reproduce_fig2(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers);
Fig3Result reproduce_fig3(const RunConfig& config, std::uint64_t seed);
Fig4Result reproduce_fig4(const RunConfig& config, std::uint64_t trials, std::uint64_t seed, unsigned workers);

Bundle render_fig2(const Fig2Result& result, std::uint64_t seed);
Bundle render_fig3(const Fig3Result& result, std::uint64_t seed);
Bundle render_fig4(const Fig4Result& result, std::uint64_t seed);

/// trials == 0 picks the figure's configured default.
Bundle reproduce(const RunConfig& config, const std::string& figure, std::uint64_t trials, std::uint64_t seed,
                 unsigned workers);

struct AnalyzeParams {
  std::uint64_t window_ns = 0;
  std::uint64_t delay_ns = 0;
  std::optional<std::uint64_t> trials;  // overrides the Sync count
  phys::DetectionChain detection;
};

Bundle analyze(std::span<const ingest::EventRecord> events, const AnalyzeParams& params);

/// Deterministic 64-bit seed derivation for sub-runs.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

std::string counts_csv(const sim::CountsTable& table);
nlohmann::json to_json(const DelayEstimates& estimates);

}  // namespace qmem::pipeline
