#include "claimrl/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "claimrl/rewards.hpp"
#include "claimrl/util.hpp"

namespace claimrl::eval {

namespace {

nlohmann::ordered_json arm_json(const ArmCounts& a) {
  nlohmann::ordered_json j;
  j["granted"] = a.granted;
  j["pregrant"] = a.pregrant;
  j["ratio"] = a.ratio;
  return j;
}

ArmCounts arm_from(const nlohmann::json& j) {
  return {j.at("granted").get<std::size_t>(), j.at("pregrant").get<std::size_t>(), j.at("ratio").get<double>()};
}

void tally(ArmCounts& a, bool granted, std::size_t n) {
  (granted ? a.granted : a.pregrant) += 1;
  a.ratio = static_cast<double>(a.granted) / static_cast<double>(n);
}

}  // namespace

nlohmann::ordered_json GrantedRatioReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["n_rows"] = n_rows;
  j["before"] = arm_json(before);
  j["after"] = arm_json(after);
  return j;
}

GrantedRatioReport GrantedRatioReport::from_json(const nlohmann::json& j) {
  return {j.at("dataset").get<std::string>(), j.at("n_rows").get<std::size_t>(), arm_from(j.at("before")),
          arm_from(j.at("after"))};
}

GrantClassifier net_classifier(const nn::RewardNet<float>& net, const tok::Vocabulary& vocab) {
  return [&net, &vocab](std::string_view text) {
    return nn::classify_label(static_cast<float>(rewards::learned_probability(net, vocab, text)));
  };
}

GrantedRatioReport granted_ratio_eval(const nn::PolicyModel<float>& sft, const nn::PolicyModel<float>& policy,
                                      const GrantClassifier& classify, std::span<const corpus::ClaimRecord> dataset,
                                      const tok::Vocabulary& vocab, const GrantedRatioConfig& config) {
  if (config.n_rows == 0) throw std::invalid_argument("n_rows must be positive");
  const auto prompts =
      ppo::make_prompts(dataset, vocab, config.prompt_token_count, config.n_rows, sft.config().context_length);
  nn::SamplerConfig sampler = config.sampler;
  sampler.stop_token = vocab.end_id();

  GrantedRatioReport report;
  report.dataset = config.dataset_name;
  report.n_rows = config.n_rows;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto seed = util::derive_seed(config.seed, 0, i);
    const std::string prompt = vocab.decode(prompts[i].tokens);
    const auto before = nn::sample(sft, prompts[i].tokens, sampler, seed);
    const auto after = nn::sample(policy, prompts[i].tokens, sampler, seed);
    tally(report.before, classify(prompt + vocab.decode(before)), report.n_rows);
    tally(report.after, classify(prompt + vocab.decode(after)), report.n_rows);
  }
  return report;
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  if (window < 1) throw std::invalid_argument("moving-average window must be at least 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += series[k];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& y_label, std::span<const std::int64_t> steps,
                       std::span<const double> raw, std::span<const double> smoothed) {
  constexpr double W = 800, H = 420, left = 70, right = 20, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double x0 = steps.empty() ? 0.0 : static_cast<double>(steps.front());
  double x1 = steps.empty() ? 1.0 : static_cast<double>(steps.back());
  if (x1 <= x0) x1 = x0 + 1.0;
  double y0 = 0.0, y1 = 1.0;
  bool any = false;
  for (auto s : {raw, smoothed})
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      if (!any) y0 = y1 = v;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
      any = true;
    }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0;
    const double yv = y0 + (y1 - y0) * i / 5.0;
    os << "<line x1=\"" << px(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << px(xv) << "\" y2=\"" << top + ph + 5
       << "\" stroke=\"black\"/>";
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 20 << "\" text-anchor=\"middle\">"
       << static_cast<long long>(std::llround(xv)) << "</text>\n";
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << left << "\" y2=\"" << py(yv)
       << "\" stroke=\"black\"/>";
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">step</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(y_label) << "</text>\n";

  auto polyline = [&](const char* id, std::span<const double> ys, const char* colour, double width) {
    os << "<polyline id=\"" << id << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"" << width
       << "\" data-values=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) os << (i ? " " : "") << util::format_double(ys[i]);
    os << "\" points=\"";
    char buf[48];
    for (std::size_t i = 0; i < ys.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", i ? " " : "", px(static_cast<double>(steps[i])),
                    std::isfinite(ys[i]) ? py(ys[i]) : top + ph);
      os << buf;
    }
    os << "\"/>\n";
    if (ys.size() == 1) {
      os << "<circle cx=\"" << px(static_cast<double>(steps[0])) << "\" cy=\"" << py(ys[0]) << "\" r=\"3\" fill=\""
         << colour << "\"/>\n";
    }
  };
  polyline("raw", raw, "#9ecae1", 1.0);
  if (!smoothed.empty()) {
    polyline("ma", smoothed, "#08519c", 2.0);
    os << "<text x=\"" << left + pw - 4 << "\" y=\"" << top + 14 << "\" text-anchor=\"end\" fill=\"#08519c\">moving average ("
       << kTrendWindow << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<double> svg_series(const std::string& svg, const std::string& id) {
  const auto at = svg.find("<polyline id=\"" + id + "\"");
  if (at == std::string::npos) throw std::runtime_error("svg has no series " + id);
  const std::string key = "data-values=\"";
  const auto b = svg.find(key, at);
  const auto e = svg.find('"', b + key.size());
  std::istringstream in(svg.substr(b + key.size(), e - b - key.size()));
  std::vector<double> out;
  std::string tokn;
  while (in >> tokn) out.push_back(std::stod(tokn));
  return out;
}

void emit_report(std::span<const ppo::TrainLogRow> log, const std::filesystem::path& dir) {
  if (log.empty()) throw std::invalid_argument("cannot report an empty training log");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create report directory " + dir.string());
  ppo::write_log_csv(dir / "report.csv", log);

  std::vector<std::int64_t> steps;
  std::vector<double> reward, length, terms;
  for (const auto& r : log) {
    steps.push_back(r.step);
    reward.push_back(r.reward_mean);
    length.push_back(r.claim_length_mean);
    terms.push_back(r.limiting_term_count_mean);
  }
  auto write = [&](const char* name, const std::string& body) {
    std::ofstream out(dir / name, std::ios::binary);
    out << body;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  write("reward_mean.svg", render_svg("Mean reward", "reward_mean", steps, reward, moving_average(reward, kTrendWindow)));
  write("claim_length.svg",
        render_svg("Claim length", "claim_length_mean (characters)", steps, length, moving_average(length, kTrendWindow)));
  write("limiting_terms.svg", render_svg("Limiting terms", "limiting_term_count_mean", steps, terms,
                                         moving_average(terms, kTrendWindow)));
}

}  // namespace claimrl::eval
