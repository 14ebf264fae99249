#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "boed/harness/config.hpp"
#include "boed/harness/manifest.hpp"

namespace boed::harness {

// Each command writes its CSVs and manifest.json under cfg.out and returns
// the manifest. Progress and diagnostics go to `log`.
RunManifest cmd_estimate(const ExperimentConfig& cfg, std::ostream& log);
RunManifest cmd_train(const ExperimentConfig& cfg, std::ostream& log);
RunManifest cmd_eval(const ExperimentConfig& cfg, std::ostream& log);
RunManifest cmd_posterior(const ExperimentConfig& cfg, std::ostream& log);
RunManifest cmd_ablate(const ExperimentConfig& cfg, std::ostream& log);

RunManifest run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log);
std::vector<std::string> command_names();

std::string table1_header();
std::string eig_curve_header();

// True when a training run hit the divergence detector (recorded in the notes).
bool manifest_reports_divergence(const RunManifest& m);

}  // namespace boed::harness
