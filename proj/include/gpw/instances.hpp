#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gpw/expr.hpp"
#include "gpw/manifold.hpp"
#include "gpw/util.hpp"

namespace gpw {

using Json = nlohmann::ordered_json;

// A named manifold instance: the (p, f) pair as text, plus optional sample
// points. Matches the config-file schema { "p": int, "f": "<s-expression>" }.
struct InstanceSpec {
  std::string name;
  int p = 1;
  std::string f_text = "0";
  std::vector<std::vector<double>> points;
  std::vector<std::string> suites;
};

inline Expr parse_f(int p, const std::string& text) {
  CoordinateChart chart(p);
  return Expr::parse_sexpr(text, [chart](std::string_view n) { return chart.index_of(n); });
}

inline ManifoldConfig config_from_instance(const InstanceSpec& spec) {
  return ManifoldConfig(spec.p, parse_f(spec.p, spec.f_text));
}

inline InstanceSpec instance_from_json(const Json& j) {
  InstanceSpec spec;
  if (!j.contains("p")) throw Error("instance file needs a \"p\" field");
  if (!j.contains("f")) throw Error("instance file needs an \"f\" field");
  spec.p = j.at("p").get<int>();
  spec.f_text = j.at("f").get<std::string>();
  spec.name = j.value("name", std::string("instance"));
  if (j.contains("points"))
    spec.points = j.at("points").get<std::vector<std::vector<double>>>();
  if (j.contains("suites")) spec.suites = j.at("suites").get<std::vector<std::string>>();
  return spec;
}

inline Json instance_to_json(const InstanceSpec& spec) {
  Json j;
  j["name"] = spec.name;
  j["p"] = spec.p;
  j["f"] = spec.f_text;
  if (!spec.points.empty()) j["points"] = spec.points;
  if (!spec.suites.empty()) j["suites"] = spec.suites;
  return j;
}

inline InstanceSpec load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open instance file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("bad JSON in '" + path + "': " + e.what());
  }
  auto spec = instance_from_json(j);
  if (spec.name == "instance") spec.name = path;
  return spec;
}

// ---------------------------------------------------------------------------
// Built-in presets: S_<dim> (f = 0), H_<dim>_<k> for 1 <= k <= p+2, and
// N_<dim>_exp / N_<dim>_expexp for the two exponential channels, covering
// p = 1..3 (dim 10, 14, 18).
// ---------------------------------------------------------------------------
namespace detail {

inline std::string ladder_text(const CoordinateChart& c, int up_to, const char* tail) {
  Expr f = Expr::constant(0);
  for (int m = 1; m <= up_to; ++m)
    f += Expr::variable(c.z(m)) * Expr::pow(Expr::variable(c.z(0)), m + 1);
  const std::string t(tail);
  if (t == "poly") f += Expr::pow(Expr::variable(c.z(0)), c.p + 3);
  if (t == "exp" || t == "expexp") f += Expr::exp(Expr::variable(c.z(0)));
  if (t == "expexp") f += Expr::exp(Expr::constant(2) * Expr::variable(c.z(0)));
  return f.to_sexpr([c](int id) { return c.name(id); });
}

}  // namespace detail

inline std::vector<InstanceSpec> preset_instances() {
  std::vector<InstanceSpec> out;
  for (int p = 1; p <= 3; ++p) {
    CoordinateChart c(p);
    const std::string dim = std::to_string(c.dim());
    out.push_back({"S_" + dim, p, "0", {}, {}});
    for (int k = 1; k <= p; ++k)
      out.push_back({"H_" + dim + "_" + std::to_string(k), p, detail::ladder_text(c, k, "none"), {}, {}});
    out.push_back({"H_" + dim + "_" + std::to_string(p + 1), p, detail::ladder_text(c, p, "poly"), {}, {}});
    out.push_back({"H_" + dim + "_" + std::to_string(p + 2), p, detail::ladder_text(c, p, "exp"), {}, {}});
    out.push_back({"N_" + dim + "_exp", p, detail::ladder_text(c, p, "exp"), {}, {}});
    out.push_back({"N_" + dim + "_expexp", p, detail::ladder_text(c, p, "expexp"), {}, {}});
  }
  return out;
}

inline std::optional<InstanceSpec> preset_instance(const std::string& name) {
  for (const auto& spec : preset_instances())
    if (spec.name == name) return spec;
  return std::nullopt;
}

// Accepts a preset name or a path to a JSON instance file.
inline InstanceSpec resolve_instance(const std::string& name_or_path) {
  if (auto preset = preset_instance(name_or_path)) return *preset;
  std::ifstream probe(name_or_path);
  if (probe) return load_instance_file(name_or_path);
  std::ostringstream os;
  os << "'" << name_or_path << "' is neither a preset nor a readable file; presets:";
  for (const auto& spec : preset_instances()) os << " " << spec.name;
  throw Error(os.str());
}

}  // namespace gpw
