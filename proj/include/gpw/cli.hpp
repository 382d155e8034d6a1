#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpw/acceptance.hpp"
#include "gpw/instances.hpp"
#include "gpw/reports.hpp"

namespace gpw::cli {

// Comma-separated coordinate list.
inline std::vector<double> parse_point_csv(const std::string& text, int dim) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("bad coordinate '" + item + "' in point list");
    }
  }
  if (static_cast<int>(out.size()) != dim)
    throw Error("point has " + std::to_string(out.size()) + " coordinates, expected " +
                std::to_string(dim));
  return out;
}

// "a:b:n" -> n equally spaced values from a to b.
inline std::vector<double> parse_grid(const std::string& text) {
  double a = 0, b = 0;
  int n = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(text);
  if (!(ss >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1)
    throw Error("grid must have the form a:b:n, got '" + text + "'");
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

inline std::vector<std::vector<double>> sample_points(const InstanceSpec& spec,
                                                      const ManifoldConfig& config, int count,
                                                      std::uint64_t seed) {
  std::vector<std::vector<double>> pts;
  for (const auto& p : spec.points) {
    if (static_cast<int>(p.size()) != config.dim())
      throw Error("instance point has wrong dimension");
    pts.push_back(p);
  }
  Rng rng(seed);
  while (static_cast<int>(pts.size()) < count) pts.push_back(random_point(config.chart(), rng));
  if (static_cast<int>(pts.size()) > count) pts.resize(static_cast<std::size_t>(count));
  return pts;
}

inline Json cmd_describe(const InstanceSpec& spec) {
  const auto config = config_from_instance(spec);
  Json j;
  j["name"] = spec.name;
  j["p"] = config.p();
  j["dimension"] = config.dim();
  j["signature"] = {config.signature().first, config.signature().second};
  j["f"] = spec.f_text;
  j["f_polynomial"] = config.rational_mode();
  j["f_at_most_quadratic"] = config.f_at_most_quadratic();
  j["psi_channel"] = bool(config.psi());
  Json coords = Json::array();
  for (const auto& n : config.chart().names()) coords.push_back(n);
  j["coordinates"] = coords;
  return j;
}

inline Json cmd_curvature(const InstanceSpec& spec, int order, int npoints, std::uint64_t seed) {
  const auto config = config_from_instance(spec);
  const auto pts = sample_points(spec, config, npoints, seed);
  Json j;
  j["name"] = spec.name;
  j["order"] = order;
  Json per_point = Json::array();
  for (const auto& pt : pts) {
    Json rec;
    rec["point"] = pt;
    const auto closed = nabla_r_closed(config, std::span<const double>(pt), order);
    rec["nabla_r"] = tensor_to_json(closed);
    if (order <= 4) {
      const auto oracle = nabla_r_oracle(config, std::span<const double>(pt), order);
      rec["oracle_gap"] = sup_residual(closed, oracle);
    } else {
      rec["oracle_gap"] = nullptr;
    }
    per_point.push_back(rec);
  }
  j["points"] = per_point;
  return j;
}

inline Json cmd_weyl(const InstanceSpec& spec, int max_slots, int npoints, std::uint64_t seed) {
  const auto config = config_from_instance(spec);
  const auto pts = sample_points(spec, config, npoints, seed);
  const auto schemes = enumerate_schemes(max_slots);
  int max_order = 0;
  for (const auto& s : schemes)
    for (int k : s.orders) max_order = std::max(max_order, k);
  Json j;
  j["name"] = spec.name;
  j["max_slots"] = max_slots;
  j["schemes"] = schemes.size();
  double worst = 0.0;
  for (const auto& pt : pts) {
    std::map<int, SparseTensor<double>> tensors;
    std::map<int, FactorEntries<double>> expanded;
    for (int k = 0; k <= max_order; ++k) {
      tensors.emplace(k, nabla_r_closed(config, std::span<const double>(pt), k));
      expanded.emplace(k, tensors.at(k).expanded_entries());
    }
    const auto gd = dense_inverse_metric(metric_inverse_at(config, std::span<const double>(pt)));
    for (const auto& s : schemes) {
      std::vector<const FactorEntries<double>*> refs;
      for (int k : s.orders) refs.push_back(&expanded.at(k));
      worst = std::max(worst, std::abs(evaluate_scheme_entries(refs, gd, s)));
    }
  }
  j["points"] = pts.size();
  j["max_abs_value"] = worst;
  j["all_zero"] = worst <= 1e-10;
  return j;
}

inline Json cmd_certify(const InstanceSpec& spec, int order, int npoints, std::uint64_t seed) {
  const auto config = config_from_instance(spec);
  const auto pts = sample_points(spec, config, npoints, seed);
  const Model model = build_model(config.p(), order);
  Json j;
  j["name"] = spec.name;
  j["order"] = order;
  Json per_point = Json::array();
  bool all = true;
  for (const auto& pt : pts) {
    Json rec;
    rec["point"] = pt;
    try {
      const auto [fr, data] = normalize_frame(config, std::span<const double>(pt), order);
      (void)data;
      const auto cert = verify_isomorphism(config, std::span<const double>(pt), fr, model);
      rec["certificate"] = certificate_to_json(cert);
      all = all && cert.pass;
    } catch (const PreconditionError& e) {
      rec["error"] = {{"quantity", e.quantity}, {"what", e.what()}};
      all = false;
    }
    per_point.push_back(rec);
  }
  j["points"] = per_point;
  j["pass"] = all;
  return j;
}

inline Json cmd_classify(const InstanceSpec& spec, const std::vector<double>& grid) {
  const auto config = config_from_instance(spec);
  Json j = classification_to_json(classify(config, grid));
  j["name"] = spec.name;
  // keep name first for readability
  Json ordered;
  ordered["name"] = spec.name;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "name") ordered[it.key()] = it.value();
  return ordered;
}

inline std::string classification_markdown(const Json& j) {
  std::ostringstream os;
  os << "| instance | symmetric | homogeneous | curvature-homogeneity order | basis |\n";
  os << "|---|---|---|---|---|\n";
  os << "| " << j.at("name").get<std::string>() << " | "
     << (j.at("symmetric").get<bool>() ? "yes" : "no") << " | "
     << (j.at("homogeneous").get<bool>() ? "yes" : "no") << " | ";
  if (j.at("curvature_homogeneity_order").is_string())
    os << j.at("curvature_homogeneity_order").get<std::string>();
  else
    os << j.at("curvature_homogeneity_order").get<int>();
  os << " | " << j.at("basis").get<std::string>() << " |\n";
  return os.str();
}

inline Json cmd_isometry(const InstanceSpec& spec1, const std::vector<double>& p1,
                         const InstanceSpec& spec2, const std::vector<double>& p2, int k_max,
                         bool build, int order) {
  const auto c1 = config_from_instance(spec1);
  const auto c2 = config_from_instance(spec2);
  Json j;
  j["first"] = {{"name", spec1.name}, {"point", p1}};
  j["second"] = {{"name", spec2.name}, {"point", p2}};
  const auto verdict = isometry_decision(c1, p1, c2, p2, k_max);
  j["verdict"] = verdict_to_json(verdict);
  if (build) {
    if (spec1.f_text != spec2.f_text || spec1.p != spec2.p)
      throw Error("isometry construction needs the same instance on both sides");
    if (!verdict.consistent) {
      j["map"] = nullptr;
      j["note"] = "alpha invariants separate the points; no map constructed";
    } else {
      const auto map = build_isometry(c1, p1, p2, order);
      const auto check = verify_isometry_map(c1, map);
      j["map"] = isometry_map_to_json(map);
      j["verification"] = {{"worst", check.worst}, {"pass", check.pass}};
    }
  }
  return j;
}

inline Json error_to_json(const Error& e) {
  Json j;
  if (const auto* pe = dynamic_cast<const PreconditionError*>(&e)) {
    j["error"] = {{"type", "precondition"}, {"quantity", pe->quantity}, {"what", pe->what()}};
  } else if (const auto* pe2 = dynamic_cast<const ParseError*>(&e)) {
    j["error"] = {{"type", "parse"}, {"line", pe2->line}, {"col", pe2->col}, {"what", pe2->what()}};
  } else {
    j["error"] = {{"type", "error"}, {"what", e.what()}};
  }
  return j;
}

}  // namespace gpw::cli
