#include "swinq/engine/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "swinq/errors.hpp"
#include "swinq/model/forward.hpp"
#include "swinq/quant/quantize.hpp"

namespace swinq {

namespace {

bool is_norm_site(const std::string& site) {
  return site.ends_with(".ln1.in") || site.ends_with(".ln2.in") || site.ends_with(".norm.in") ||
         site == "final_norm.in";
}

std::string norm_gamma(const std::string& site) {
  const std::string base = site.substr(0, site.size() - 3);
  return base == "final_norm" ? "final_norm.gamma" : base + ".weight";
}

QuantParams fixed_range(int bits) {
  QuantParams qp;
  qp.scheme = QuantScheme::symmetric;
  qp.bits = bits;
  qp.scale = kDefaultActivationRange / static_cast<float>((1 << (bits - 1)) - 1);
  return qp;
}

QuantParams log2_params(int bits) {
  QuantParams qp;
  qp.scheme = QuantScheme::log2;
  qp.bits = bits;
  return qp;
}

struct SiteRecord {
  CalibrationStats stats;
  std::vector<float> values;
  std::vector<float> channel_range;
};

}  // namespace

std::vector<std::string> activation_sites(const ModelConfig& cfg, CalibrationMethod method) {
  cfg.validate();
  const bool ptf = method == CalibrationMethod::fqvit;
  std::vector<std::string> sites;
  auto linear = [&](const std::string& layer, bool out) {
    sites.push_back(layer + ".in");
    if (out) sites.push_back(layer + ".out");
  };
  linear("patch_embed", true);
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
      const std::string p = block_prefix(s, b);
      if (ptf) sites.push_back(p + ".ln1.in");
      linear(p + ".qkv", true);
      sites.push_back(p + ".attn.probs");
      linear(p + ".proj", true);
      if (ptf) sites.push_back(p + ".ln2.in");
      linear(p + ".mlp1", true);
      linear(p + ".mlp2", true);
    }
    if (s + 1 < cfg.num_stages()) {
      if (ptf) sites.push_back(merge_prefix(s) + ".norm.in");
      linear(merge_prefix(s) + ".reduce", true);
    }
  }
  if (ptf) sites.push_back("final_norm.in");
  linear("head", false);
  return sites;
}

CalibrationTable calibrate(const ParameterSet& params, const ModelConfig& cfg, CalibrationMethod method,
                           std::span<const std::vector<float>> images, const CalibrationOptions& options) {
  const std::vector<std::string> sites = activation_sites(cfg, method);
  constexpr int bits = 8;
  CalibrationTable table;
  table.method = to_string(method);
  table.sample_count = images.size();

  if (method == CalibrationMethod::default_range) {
    for (const auto& site : sites) table.sites[site] = fixed_range(bits);
    return table;
  }
  if (images.empty()) throw CalibrationError("method '" + table.method + "' needs a non-empty calibration set");

  const bool keep_values = method == CalibrationMethod::omse;
  const bool ptf = method == CalibrationMethod::fqvit;
  std::map<std::string, SiteRecord> records;
  for (const auto& site : sites) {
    SiteRecord& r = records[site];
    r.stats.site = site;
    if (ptf && is_norm_site(site)) r.channel_range.assign(params.at(norm_gamma(site)).numel(), 0.0f);
  }

  FloatBackend<float> be(params);
  be.set_observer([&](const std::string& site, std::span<const float> v) {
    const auto it = records.find(site);
    if (it == records.end()) return;
    SiteRecord& r = it->second;
    if (!r.channel_range.empty()) {
      const std::size_t c = r.channel_range.size();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw CalibrationError("non-finite activation at site '" + site + "'");
        r.channel_range[i % c] = std::max(r.channel_range[i % c], std::abs(v[i]));
      }
      return;
    }
    observe(r.stats, v, options.ema_alpha);
    if (keep_values) r.values.insert(r.values.end(), v.begin(), v.end());
  });

  const ForwardPlan plan(cfg);
  for (const auto& image : images) forward_with(be, plan, std::span<const float>(image));

  for (const auto& site : sites) {
    SiteRecord& r = records.at(site);
    if (!r.channel_range.empty()) {
      table.sites[site] = ptf_layernorm_params(r.channel_range, bits, kPtfMaxExponent);
      continue;
    }
    if (ptf && site.ends_with(".attn.probs")) {
      table.sites[site] = log2_params(4);
      continue;
    }
    if (r.stats.count == 0) throw CalibrationError("site '" + site + "' was never observed");
    if (r.stats.degenerate()) {
      table.sites[site] = QuantParams{};
      table.warnings.push_back("site '" + site + "' is constant; using scale 1, zero point 0");
      continue;
    }
    switch (method) {
      case CalibrationMethod::minmax:
      case CalibrationMethod::fqvit:
        table.sites[site] = calibrate_minmax(r.stats, bits, QuantScheme::affine);
        break;
      case CalibrationMethod::ema:
        table.sites[site] = calibrate_ema(r.stats, bits, QuantScheme::affine);
        break;
      case CalibrationMethod::percentile:
        table.sites[site] = calibrate_percentile(r.stats, bits, QuantScheme::affine, options.percentile);
        break;
      case CalibrationMethod::omse: {
        std::vector<float> sample;
        const std::size_t limit = std::max<std::size_t>(options.omse_sample_limit, 1);
        if (r.values.size() <= limit) {
          sample = std::move(r.values);
        } else {
          const std::size_t stride = (r.values.size() + limit - 1) / limit;
          for (std::size_t i = 0; i < r.values.size(); i += stride) sample.push_back(r.values[i]);
        }
        table.sites[site] = calibrate_omse(r.stats, sample, bits, QuantScheme::affine);
        break;
      }
      case CalibrationMethod::default_range:
        break;
    }
  }
  return table;
}

}  // namespace swinq
