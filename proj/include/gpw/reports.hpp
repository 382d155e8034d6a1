#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "gpw/geodesic.hpp"
#include "gpw/instances.hpp"
#include "gpw/invariant.hpp"
#include "gpw/model.hpp"
#include "gpw/tensor.hpp"

namespace gpw {

// JSON adapters with fixed field order and sorted entry lists, so equal
// inputs serialize byte-identically.

inline std::string format_double(double v) {
  // shortest representation that round-trips; stable across runs
  Json j = v;
  return j.dump();
}

inline Json tensor_to_json(const SparseTensor<double>& t) {
  Json j;
  j["order"] = t.order();
  Json variance = Json::array();
  for (Variance v : t.variance()) variance.push_back(v == Variance::Co ? "co" : "contra");
  j["variance"] = variance;
  Json entries = Json::array();
  for (const auto& [idx, v] : t.expanded_entries()) {
    Json e = Json::array();
    e.push_back(idx);
    e.push_back(v);
    entries.push_back(e);
  }
  std::sort(entries.begin(), entries.end(),
            [](const Json& a, const Json& b) { return a[0] < b[0]; });
  j["entries"] = entries;
  return j;
}

inline SparseTensor<double> tensor_from_json(const Json& j, int dim, Sym sym = Sym::None) {
  std::vector<Variance> var;
  for (const auto& v : j.at("variance"))
    var.push_back(v.get<std::string>() == "co" ? Variance::Co : Variance::Contra);
  if (static_cast<int>(var.size()) != j.at("order").get<int>())
    throw Error("tensor order/variance mismatch");
  SparseTensor<double> t(dim, var, sym);
  for (const auto& e : j.at("entries")) {
    const auto idx = e.at(0).get<std::vector<int>>();
    // Symmetry images appear in serialized form; set is idempotent for them.
    const double v = e.at(1).get<double>();
    if (t.get(idx) == 0.0) t.set(idx, v);
  }
  return t;
}

inline Json certificate_to_json(const FrameCertificate& cert) {
  Json j;
  j["order"] = cert.order;
  j["residuals"] = cert.residuals;
  j["worst"] = cert.worst;
  j["pass"] = cert.pass;
  return j;
}

inline Json classification_to_json(const Classification& rec) {
  Json j;
  j["symmetric"] = rec.symmetric;
  if (rec.infinite_order)
    j["curvature_homogeneity_order"] = "inf";
  else
    j["curvature_homogeneity_order"] = rec.max_certified_order;
  if (rec.flat_from)
    j["flat_from"] = *rec.flat_from;
  else
    j["flat_from"] = nullptr;
  if (rec.alpha2_constant.has_value()) {
    Json a;
    a["constant"] = *rec.alpha2_constant;
    a["min"] = rec.alpha2_min;
    a["max"] = rec.alpha2_max;
    j["alpha2"] = a;
  } else {
    j["alpha2"] = nullptr;
  }
  j["homogeneous"] = rec.homogeneous;
  j["basis"] = rec.basis;
  return j;
}

inline Json verdict_to_json(const IsometryVerdict& v) {
  Json j;
  j["consistent"] = v.consistent;
  j["k_max"] = v.k_max;
  if (v.first_separating_k > 0)
    j["first_separating_k"] = v.first_separating_k;
  else
    j["first_separating_k"] = nullptr;
  j["alpha_first"] = v.alpha_first;
  j["alpha_second"] = v.alpha_second;
  return j;
}

inline Json isometry_map_to_json(const IsometryMap& map) {
  Json j;
  j["from"] = map.from;
  j["to"] = map.to;
  Json rows = Json::array();
  for (int r = 0; r < map.tangent.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < map.tangent.cols(); ++c) row.push_back(map.tangent(r, c));
    rows.push_back(row);
  }
  j["tangent"] = rows;
  return j;
}

inline std::string geodesic_csv(const ManifoldConfig& config, const GeodesicData& data,
                                double t_max, int samples) {
  if (samples < 2) throw Error("need at least two samples");
  const CoordinateChart& c = config.chart();
  std::ostringstream os;
  os << "t";
  for (int a = 0; a < config.dim(); ++a) os << "," << c.name(a);
  os << "\n";
  GeodesicSolver solver(config, data);
  for (int i = 0; i < samples; ++i) {
    const double t = t_max * static_cast<double>(i) / static_cast<double>(samples - 1);
    const auto y = solver.position(t);
    os << format_double(t);
    for (double v : y) os << "," << format_double(v);
    os << "\n";
  }
  return os.str();
}

}  // namespace gpw
