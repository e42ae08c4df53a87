// SPDX-License-Identifier: Apache-2.0
//
// qmem command-line front end. Talks to the library only through the C API.
#include <openssl/evp.h>
#include <qmem/qmem.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;
constexpr int kManifestVersion = 1;

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(qmem_status s) {
  switch (s) {
    case QMEM_E_INVALID_ARGUMENT:
    case QMEM_E_PARSE:
    case QMEM_E_CONFIG:
    case QMEM_E_IO:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

void check(qmem_status s) {
  if (s != QMEM_OK) throw Failure{exit_code_for(s), std::string(qmem_status_name(s)) + ": " + qmem_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<qmem_config, Deleter<qmem_config, qmem_config_free>>;
using BundlePtr = std::unique_ptr<qmem_bundle, Deleter<qmem_bundle, qmem_bundle_free>>;
using EventsPtr = std::unique_ptr<qmem_events, Deleter<qmem_events, qmem_events_free>>;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitUsage, "cannot open " + path.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Failure{kExitRuntime, "cannot write " + path.string()};
}

std::string sha256(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Failure{kExitRuntime, "sha256 failed"};
  std::string hex;
  char byte[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

ConfigPtr load_config(const std::string& path) {
  qmem_config* cfg = nullptr;
  check(qmem_config_load(path.c_str(), &cfg));
  return ConfigPtr(cfg);
}

ConfigPtr config_from_snapshot(const json& snapshot) {
  qmem_config* cfg = nullptr;
  check(qmem_config_parse(snapshot.dump().c_str(), &cfg));
  return ConfigPtr(cfg);
}

json config_snapshot(const qmem_config* cfg) {
  size_t needed = 0;
  qmem_config_to_json(cfg, nullptr, 0, &needed);
  std::string buf(needed + 1, '\0');
  check(qmem_config_to_json(cfg, buf.data(), buf.size(), &needed));
  buf.resize(needed);
  return json::parse(buf);
}

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
};

Outputs from_bundle(const qmem_bundle* bundle) {
  Outputs out;
  for (size_t i = 0; i < qmem_bundle_size(bundle); ++i) {
    size_t len = 0;
    const char* data = qmem_bundle_content(bundle, i, &len);
    out.files.emplace_back(qmem_bundle_name(bundle, i), std::string(data, len));
  }
  return out;
}

json checksums(const Outputs& outputs) {
  json list = json::array();
  for (const auto& [name, content] : outputs.files)
    list.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256(content)}});
  return list;
}

void emit(const fs::path& dir, const Outputs& outputs, json manifest) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kExitRuntime, "cannot create " + dir.string() + ": " + ec.message()};
  for (const auto& [name, content] : outputs.files) write_file(dir / name, content);
  manifest["outputs"] = checksums(outputs);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

json manifest_header(const std::string& command) {
  return {{"manifest_version", kManifestVersion}, {"tool", "qmem"}, {"code_version", qmem_version()},
          {"command", command}};
}

// Re-execution from a manifest's recorded arguments; shared by the
// subcommands and `verify`.

Outputs run_simulate(const json& m, unsigned workers) {
  auto cfg = config_from_snapshot(m.at("config"));
  qmem_bundle* b = nullptr;
  check(qmem_run_simulate(cfg.get(), m.at("args").at("trials").get<uint64_t>(), m.at("seed").get<uint64_t>(),
                          workers, &b));
  BundlePtr bundle(b);
  return from_bundle(bundle.get());
}

Outputs run_reproduce(const json& m, unsigned workers) {
  auto cfg = config_from_snapshot(m.at("config"));
  const auto& a = m.at("args");
  qmem_bundle* b = nullptr;
  check(qmem_run_reproduce(cfg.get(), a.at("figure").get<std::string>().c_str(), a.at("trials").get<uint64_t>(),
                           m.at("seed").get<uint64_t>(), workers, &b));
  BundlePtr bundle(b);
  return from_bundle(bundle.get());
}

Outputs run_analyze(const json& m) {
  auto cfg = config_from_snapshot(m.at("config"));
  const auto& a = m.at("args");
  qmem_events* e = nullptr;
  check(qmem_events_read(a.at("events").get<std::string>().c_str(), &e));
  EventsPtr events(e);
  qmem_bundle* b = nullptr;
  check(qmem_run_analyze(events.get(), cfg.get(), a.at("window_ns").get<uint64_t>(), a.at("delay_ns").get<uint64_t>(),
                         a.at("trials").get<uint64_t>(), &b));
  BundlePtr bundle(b);
  return from_bundle(bundle.get());
}

Outputs run_plan(const json& m) {
  const auto& a = m.at("args");
  const double r = a.at("retrieval").get<double>();
  const double n = a.at("exponent").get<double>();
  const double t0 = a.at("base_time_s").get<double>();
  const double lifetime = a.at("memory_lifetime_s").get<double>();
  const double threshold = a.at("retrieval_threshold").get<double>();

  double overhead = 0;
  check(qmem_repeater_overhead(r, n, t0, &overhead));
  json report = {{"schema_version", 1},
                 {"command", "plan"},
                 {"code_version", qmem_version()},
                 {"retrieval", r},
                 {"exponent", n},
                 {"base_time_s", t0},
                 {"overhead_s", overhead},
                 {"retrieval_threshold", threshold},
                 {"meets_retrieval_threshold", r >= threshold},
                 {"memory_lifetime_s", lifetime}};
  if (a.contains("distance_m") && !a.at("distance_m").is_null()) {
    const double d = a.at("distance_m").get<double>();
    double t = 0;
    check(qmem_light_time(d, &t));
    report["distance_m"] = d;
    report["light_time_s"] = t;
    report["lifetime_covers_light_time"] = lifetime >= t;
  }
  Outputs out;
  out.files.emplace_back("plan.json", report.dump(2) + "\n");
  return out;
}

Outputs rerun(const json& m, unsigned workers) {
  const auto cmd = m.at("command").get<std::string>();
  if (cmd == "simulate") return run_simulate(m, workers);
  if (cmd == "reproduce") return run_reproduce(m, workers);
  if (cmd == "analyze") return run_analyze(m);
  if (cmd == "plan") return run_plan(m);
  throw Failure{kExitUsage, "manifest: unknown command '" + cmd + "'"};
}

void print_plan(const std::string& report) {
  const auto r = json::parse(report);
  std::printf("repeater overhead T_r = %.6g s  (R = %.4g, n = %.4g, T0 = %.6g s)\n", r["overhead_s"].get<double>(),
              r["retrieval"].get<double>(), r["exponent"].get<double>(), r["base_time_s"].get<double>());
  std::printf("retrieval %s the loss-tolerant threshold R >= %.2g\n",
              r["meets_retrieval_threshold"].get<bool>() ? "meets" : "is below",
              r["retrieval_threshold"].get<double>());
  if (r.contains("light_time_s")) {
    std::printf("light time over %.6g m = %.6g s; memory lifetime %.6g s %s\n", r["distance_m"].get<double>(),
                r["light_time_s"].get<double>(), r["memory_lifetime_s"].get<double>(),
                r["lifetime_covers_light_time"].get<bool>() ? "is sufficient" : "is NOT sufficient");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmem: simulation and analysis of a cavity-enhanced atomic-ensemble quantum memory"};
  app.set_version_flag("--version", std::string(qmem_version()));
  app.require_subcommand(1);

  unsigned workers = qmem_default_workers();
  uint64_t seed = 1;
  std::string out_dir = ".";

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo counts and estimates for every configured delay");
  std::string sim_config;
  uint64_t sim_trials = 1'000'000;
  sim->add_option("config", sim_config, "configuration file (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--trials", sim_trials, "trials (correlation) or cycles (feedback) per delay");
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--workers", workers, "worker threads (default: QMEM_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);

  // reproduce
  auto* rep = app.add_subcommand("reproduce", "Curve tables for the write-power, read-power and lifetime studies");
  std::string figure;
  std::string rep_config = QMEM_BUNDLED_CONFIG;
  std::optional<uint64_t> rep_trials;
  rep->add_option("figure", figure, "fig2, fig3 or fig4")->required()->check(CLI::IsMember({"fig2", "fig3", "fig4"}));
  rep->add_option("--config", rep_config, "configuration file (default: bundled calibration)")
      ->check(CLI::ExistingFile);
  rep->add_option("--seed", seed, "RNG seed");
  rep->add_option("--trials", rep_trials, "trials per point (default from config)");
  rep->add_option("--out", out_dir, "output directory");
  rep->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  // analyze
  auto* ana = app.add_subcommand("analyze", "Estimates from a time-tagged event file");
  std::string events_path, ana_config;
  uint64_t window_ns = 0, delay_ns = 0, ana_trials = 0;
  std::optional<double> eta_escape, eta_path, eta_detector, bg_const, bg_leak;
  ana->add_option("events", events_path, "event file (CSV or binary)")->required()->check(CLI::ExistingFile);
  ana->add_option("--window", window_ns, "coincidence half-window in ns")->required()->check(CLI::PositiveNumber);
  ana->add_option("--delay", delay_ns, "read-out delay after the write click in ns");
  ana->add_option("--config", ana_config, "configuration supplying the detection chain")->check(CLI::ExistingFile);
  ana->add_option("--eta-escape", eta_escape, "cavity escape efficiency");
  ana->add_option("--eta-path", eta_path, "path transmission");
  ana->add_option("--eta-detector", eta_detector, "detector efficiency");
  ana->add_option("--background", bg_const, "constant write-gate background probability");
  ana->add_option("--leak", bg_leak, "write-leak fraction of p_w");
  ana->add_option("--trials", ana_trials, "number of trials (default: count of Sync events)");
  ana->add_option("--out", out_dir, "output directory");

  // plan
  auto* plan = app.add_subcommand("plan", "Repeater time overhead T_r = T0 / R^n");
  double retrieval = 0, exponent = 0, base_time = 0, lifetime = 3.2e-3, threshold = 0.5;
  std::optional<double> distance;
  std::optional<std::string> plan_out;
  plan->add_option("R", retrieval, "retrieval efficiency")
      ->required()
      ->check(CLI::PositiveNumber)
      ->check(CLI::Range(0.0, 1.0));
  plan->add_option("n", exponent, "nesting exponent")->required()->check(CLI::NonNegativeNumber);
  plan->add_option("T0", base_time, "base time in s")->required()->check(CLI::NonNegativeNumber);
  plan->add_option("--distance", distance, "link distance in m");
  plan->add_option("--lifetime", lifetime, "memory lifetime in s");
  plan->add_option("--threshold", threshold, "retrieval threshold to annotate");
  plan->add_option("--out", plan_out, "also write plan.json and a manifest here");

  // verify
  auto* ver = app.add_subcommand("verify", "Re-run a manifest and compare checksums");
  std::string verify_dir;
  ver->add_option("dir", verify_dir, "directory containing manifest.json")->required()->check(CLI::ExistingDirectory);
  ver->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) {
      auto cfg = load_config(sim_config);
      json m = manifest_header("simulate");
      m["seed"] = seed;
      m["args"] = {{"trials", sim_trials}};
      m["config"] = config_snapshot(cfg.get());
      emit(out_dir, run_simulate(m, workers), m);
    } else if (*rep) {
      if (rep_trials && *rep_trials == 0) throw Failure{kExitUsage, "--trials must be at least 1"};
      auto cfg = load_config(rep_config);
      json m = manifest_header("reproduce");
      m["seed"] = seed;
      m["args"] = {{"figure", figure}, {"trials", rep_trials.value_or(0)}};
      m["config"] = config_snapshot(cfg.get());
      emit(out_dir, run_reproduce(m, workers), m);
    } else if (*ana) {
      ConfigPtr cfg;
      if (!ana_config.empty()) {
        cfg = load_config(ana_config);
      } else {
        qmem_config* c = nullptr;
        check(qmem_config_default(&c));
        cfg.reset(c);
      }
      auto set = [&](const char* key, const std::optional<double>& v) {
        if (v) check(qmem_config_set(cfg.get(), key, json(*v).dump().c_str()));
      };
      set("detection.escape_efficiency", eta_escape);
      set("detection.path_transmission", eta_path);
      set("detection.detector_efficiency", eta_detector);
      set("detection.constant_background", bg_const);
      set("detection.write_leak_fraction", bg_leak);
      json m = manifest_header("analyze");
      m["seed"] = nullptr;
      m["args"] = {{"events", fs::absolute(events_path).string()},
                   {"window_ns", window_ns},
                   {"delay_ns", delay_ns},
                   {"trials", ana_trials}};
      m["inputs"] = json::array({{{"file", fs::absolute(events_path).string()}, {"sha256", sha256(read_file(events_path))}}});
      m["config"] = config_snapshot(cfg.get());
      emit(out_dir, run_analyze(m), m);
    } else if (*plan) {
      json m = manifest_header("plan");
      m["seed"] = nullptr;
      m["args"] = {{"retrieval", retrieval},
                   {"exponent", exponent},
                   {"base_time_s", base_time},
                   {"memory_lifetime_s", lifetime},
                   {"retrieval_threshold", threshold},
                   {"distance_m", distance ? json(*distance) : json(nullptr)}};
      const auto outputs = run_plan(m);
      print_plan(outputs.files.front().second);
      if (plan_out) emit(*plan_out, outputs, m);
    } else if (*ver) {
      const fs::path dir(verify_dir);
      const json m = json::parse(read_file(dir / "manifest.json"));
      if (m.contains("inputs")) {
        for (const auto& in : m["inputs"]) {
          if (sha256(read_file(in.at("file").get<std::string>())) != in.at("sha256").get<std::string>())
            throw Failure{kExitRuntime, "input changed since the manifest was written: " + in["file"].get<std::string>()};
        }
      }
      const json expected = m.at("outputs");
      const json actual = checksums(rerun(m, workers));
      bool ok = expected == actual;
      for (const auto& entry : expected) {
        const fs::path file = dir / entry.at("file").get<std::string>();
        const bool on_disk = fs::exists(file) && sha256(read_file(file)) == entry.at("sha256").get<std::string>();
        std::printf("%s  %s\n", on_disk ? "ok      " : "MISMATCH", entry.at("file").get<std::string>().c_str());
        ok = ok && on_disk;
      }
      if (!ok) {
        std::fprintf(stderr, "verify: re-run does not reproduce the manifest checksums\n");
        return kExitRuntime;
      }
      std::printf("verify: all outputs reproduced\n");
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "qmem: %s\n", f.message.c_str());
    return f.exit_code;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "qmem: malformed manifest: %s\n", e.what());
    return kExitUsage;
  }
  return kExitOk;
}
