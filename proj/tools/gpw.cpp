// Command-line front end: define manifold instances, run verification
// suites, emit JSON/CSV reports.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gpw/cli.hpp"

namespace {

using gpw::Json;

void emit(const Json& j, const std::string& out_dir, const std::string& stem) {
  const std::string text = j.dump(2) + "\n";
  if (out_dir.empty()) {
    std::cout << text;
    return;
  }
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / (stem + ".json");
  std::ofstream(path) << text;
  std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvature, geodesics, and homogeneity certificates for the plane-wave family"};
  app.require_subcommand(1);

  std::string instance, instance2, out_dir, point_text, point2_text, grid_text, base_text,
      velocity_text;
  int order = 1, npoints = 10, max_slots = 8, k_max = 12, samples = 101;
  std::uint64_t seed = 0;
  double t_max = 1.0;
  bool build = false;

  const auto add_common = [&](CLI::App* cmd, bool needs_instance = true) {
    if (needs_instance)
      cmd->add_option("--instance", instance, "preset name or instance JSON file")->required();
    cmd->add_option("--out", out_dir, "directory for JSON reports (default: stdout)");
    cmd->add_option("--seed", seed, "RNG seed for sampled points");
  };

  auto* describe = app.add_subcommand("describe", "summarize an instance");
  add_common(describe);

  auto* curvature = app.add_subcommand("curvature", "curvature derivative components at points");
  add_common(curvature);
  curvature->add_option("--order", order, "derivative order k");
  curvature->add_option("--points", npoints, "number of sample points");

  auto* geodesic = app.add_subcommand("geodesic", "sample a geodesic trajectory as CSV");
  add_common(geodesic);
  geodesic->add_option("--base", base_text, "start point (comma-separated)");
  geodesic->add_option("--velocity", velocity_text, "initial velocity (comma-separated)");
  geodesic->add_option("--t", t_max, "final parameter value");
  geodesic->add_option("--samples", samples, "number of samples");

  auto* weyl = app.add_subcommand("weyl", "evaluate every scalar invariant scheme");
  add_common(weyl);
  weyl->add_option("--max-slots", max_slots, "largest contraction (slots, <= 12)");
  weyl->add_option("--points", npoints, "number of sample points");

  auto* certify = app.add_subcommand("certify", "model certificates via frame normalization");
  add_common(certify);
  certify->add_option("--order", order, "model order k");
  certify->add_option("--points", npoints, "number of sample points");

  auto* classify_cmd = app.add_subcommand("classify", "symmetry/homogeneity classification");
  add_common(classify_cmd);
  classify_cmd->add_option("--grid", grid_text, "z0 grid as a:b:n (default -2:2:17)");

  auto* isometry = app.add_subcommand("isometry", "compare points through the alpha invariants");
  add_common(isometry);
  isometry->add_option("--instance2", instance2, "second instance (default: same)");
  isometry->add_option("--point", point_text, "first base point (comma-separated)")->required();
  isometry->add_option("--point2", point2_text, "second base point (comma-separated)")->required();
  isometry->add_option("--k-max", k_max, "largest alpha order compared");
  isometry->add_flag("--build", build, "construct and verify the isometry when consistent");
  isometry->add_option("--order", order, "certification order for the construction");

  auto* verify_all = app.add_subcommand("verify-all", "run every acceptance criterion");
  verify_all->add_option("--out", out_dir, "directory for the JSON report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (describe->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      emit(gpw::cli::cmd_describe(spec), out_dir, spec.name + "_describe");
    } else if (curvature->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      emit(gpw::cli::cmd_curvature(spec, order, npoints, seed), out_dir,
           spec.name + "_curvature");
    } else if (geodesic->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      const auto config = gpw::config_from_instance(spec);
      gpw::GeodesicData data;
      if (!base_text.empty())
        data.base = gpw::cli::parse_point_csv(base_text, config.dim());
      else
        data.base.assign(static_cast<std::size_t>(config.dim()), 0.0);
      if (!velocity_text.empty()) {
        data.velocity = gpw::cli::parse_point_csv(velocity_text, config.dim());
      } else {
        gpw::Rng rng(seed);
        data.velocity = gpw::random_point(config.chart(), rng);
      }
      const std::string csv = gpw::geodesic_csv(config, data, t_max, samples);
      if (out_dir.empty()) {
        std::cout << csv;
      } else {
        std::filesystem::create_directories(out_dir);
        const auto path = std::filesystem::path(out_dir) / (spec.name + "_geodesic.csv");
        std::ofstream(path) << csv;
        std::cout << "wrote " << path.string() << "\n";
      }
    } else if (weyl->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      const Json j = gpw::cli::cmd_weyl(spec, max_slots, npoints, seed);
      emit(j, out_dir, spec.name + "_weyl");
      return j.at("all_zero").get<bool>() ? 0 : 1;
    } else if (certify->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      const Json j = gpw::cli::cmd_certify(spec, order, npoints, seed);
      emit(j, out_dir, spec.name + "_certify");
      return j.at("pass").get<bool>() ? 0 : 1;
    } else if (classify_cmd->parsed()) {
      const auto spec = gpw::resolve_instance(instance);
      const auto grid = grid_text.empty() ? gpw::default_z0_grid() : gpw::cli::parse_grid(grid_text);
      const Json j = gpw::cli::cmd_classify(spec, grid);
      emit(j, out_dir, spec.name + "_classify");
      std::cout << gpw::cli::classification_markdown(j);
    } else if (isometry->parsed()) {
      const auto spec1 = gpw::resolve_instance(instance);
      const auto spec2 = instance2.empty() ? spec1 : gpw::resolve_instance(instance2);
      const auto c1 = gpw::config_from_instance(spec1);
      const auto c2 = gpw::config_from_instance(spec2);
      const auto p1 = gpw::cli::parse_point_csv(point_text, c1.dim());
      const auto p2 = gpw::cli::parse_point_csv(point2_text, c2.dim());
      emit(gpw::cli::cmd_isometry(spec1, p1, spec2, p2, k_max, build, order), out_dir,
           spec1.name + "_isometry");
    } else if (verify_all->parsed()) {
      const auto results = gpw::run_acceptance();
      bool ok = true;
      for (const auto& r : results) {
        std::cout << (r.pass ? "[PASS]" : "[FAIL]") << " criterion " << r.id << " (" << r.name
                  << "): " << r.details << "\n";
        ok = ok && r.pass;
      }
      std::cout << (ok ? "ACCEPTANCE: all criteria passed\n" : "ACCEPTANCE: FAILURES PRESENT\n");
      if (!out_dir.empty()) {
        Json j;
        Json list = Json::array();
        for (const auto& r : results) {
          Json rec;
          rec["id"] = r.id;
          rec["name"] = r.name;
          rec["pass"] = r.pass;
          rec["details"] = r.details;
          list.push_back(rec);
        }
        j["criteria"] = list;
        j["pass"] = ok;
        emit(j, out_dir, "verify_all");
      }
      return ok ? 0 : 1;
    }
  } catch (const gpw::Error& e) {
    std::cerr << gpw::cli::error_to_json(e).dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": {\"what\": \"" << e.what() << "\"}}\n";
    return 2;
  }
  return 0;
}
