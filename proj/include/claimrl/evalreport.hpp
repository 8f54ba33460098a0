#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "claimrl/corpus.hpp"
#include "claimrl/neural/generation.hpp"
#include "claimrl/neural/policy_model.hpp"
#include "claimrl/neural/reward_net.hpp"
#include "claimrl/ppo.hpp"
#include "claimrl/tokenizer.hpp"

namespace claimrl::eval {

struct ArmCounts {
  std::size_t granted = 0;
  std::size_t pregrant = 0;
  double ratio = 0.0;  // granted / n_rows
};

struct GrantedRatioReport {
  std::string dataset;
  std::size_t n_rows = 0;
  ArmCounts before;
  ArmCounts after;

  nlohmann::ordered_json to_json() const;
  static GrantedRatioReport from_json(const nlohmann::json& j);
};

/// Decides granted (true) or pre-grant for a full generated claim text.
using GrantClassifier = std::function<bool(std::string_view text)>;

/// Classifier backed by a reward network with the 0.5 threshold.
GrantClassifier net_classifier(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab);

struct GrantedRatioConfig {
  std::size_t n_rows = 100;
  int prompt_token_count = 30;
  nn::SamplerConfig sampler;  // stop_token is forced to the end tag
  std::uint64_t seed = 0;
  std::string dataset_name = "dataset";
};

/// One generation per prompt per arm; arm seeds are shared per row. The text
/// classified is prompt + continuation.
GrantedRatioReport granted_ratio_eval(const nn::PolicyModel<float>& sft, const nn::PolicyModel<float>& policy,
                                      const GrantClassifier& classify, std::span<const corpus::ClaimRecord> dataset,
                                      const tok::Vocabulary& vocab, const GrantedRatioConfig& config);

/// Trailing mean with partial windows at the head. Throws
/// std::invalid_argument for window < 1.
std::vector<double> moving_average(std::span<const double> series, std::size_t window);

inline constexpr std::size_t kTrendWindow = 100;

/// Writes report.csv, reward_mean.svg, claim_length.svg and
/// limiting_terms.svg into dir (created when missing).
void emit_report(std::span<const ppo::TrainLogRow> log, const std::filesystem::path& dir);

/// Line chart of raw and smoothed series. Each polyline carries its exact
/// values in a data-values attribute.
std::string render_svg(const std::string& title, const std::string& y_label, std::span<const std::int64_t> steps,
                       std::span<const double> raw, std::span<const double> smoothed);

/// Parses the data-values attribute of the polyline with the given id.
std::vector<double> svg_series(const std::string& svg, const std::string& id);

}  // namespace claimrl::eval
