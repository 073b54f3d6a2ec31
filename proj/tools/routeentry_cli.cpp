// Command-line pipeline: panel construction, covariate catalog, model fits,
// coefficient classification and interrater agreement reports.

#include "routeentry/agreement.hpp"
#include "routeentry/covariates.hpp"
#include "routeentry/estimators.hpp"
#include "routeentry/ingest.hpp"
#include "routeentry/manifest.hpp"
#include "routeentry/model_spec.hpp"
#include "routeentry/panel.hpp"
#include "routeentry/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace routeentry;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 2;
constexpr int exit_numeric = 3;

struct YearsFlag {
  int first = 2008;
  int last = 2018;
};

YearsFlag parse_years(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw io_error("--years expects A:B, got '" + s + "'");
  YearsFlag y;
  y.first = std::stoi(s.substr(0, colon));
  y.last = std::stoi(s.substr(colon + 1));
  if (y.first > y.last) throw io_error("--years range is reversed");
  return y;
}

struct PipelineFlags {
  std::string flights;
  std::string airports;
  std::string cities;
  std::string regions;
  std::string carriers;
  std::string carrier = "AZU";
  std::string years = "2008:2018";
  int base_year = 2007;
  int bankr_year = 2018;
  double min_miles = 100.0;
  double max_miles = 3000.0;
  bool count_reentry = false;
  bool censor_post_entry = false;
};

void add_panel_flags(CLI::App* cmd, PipelineFlags& f, bool need_city_tables) {
  cmd->add_option("--flights", f.flights, "flights CSV")->required();
  cmd->add_option("--airports", f.airports, "airports CSV")->required();
  cmd->add_option("--carrier", f.carrier, "subject carrier code");
  cmd->add_option("--years", f.years, "sample window A:B");
  cmd->add_option("--base-year", f.base_year, "base year for frozen variables");
  cmd->add_option("--min-miles", f.min_miles, "distance filter lower bound");
  cmd->add_option("--max-miles", f.max_miles, "distance filter upper bound");
  cmd->add_flag("--count-reentry", f.count_reentry, "count restarts after a full absent year");
  cmd->add_flag("--censor-post-entry", f.censor_post_entry, "drop years after the entry year");
  auto* cities = cmd->add_option("--cities", f.cities, "city attributes CSV");
  auto* regions = cmd->add_option("--regions", f.regions, "airport-region map CSV");
  auto* carriers = cmd->add_option("--carriers", f.carriers, "carrier class CSV");
  cmd->add_option("--bankr-year", f.bankr_year, "bankruptcy presence year");
  if (need_city_tables) {
    cities->required();
    regions->required();
    carriers->required();
  }
}

struct BuiltPanel {
  panel::Panel panel;
  std::vector<ingest::FlightRecord> flights_window; // base year included
  std::vector<ingest::AirportRecord> airports;
};

BuiltPanel build_pipeline_panel(const PipelineFlags& f, manifest::RunManifest& run) {
  const YearsFlag y = parse_years(f.years);
  run.add_input(f.flights);
  run.add_input(f.airports);

  auto airports = ingest::load_airports(f.airports);
  const ingest::YearRange load_window{std::min(f.base_year, y.first), y.last};
  auto loaded = ingest::load_flights(f.flights, load_window);
  std::cout << "flights: " << loaded.records.size() << " accepted, " << loaded.rejects.size()
            << " rejected\n";

  auto pairs = panel::enumerate_pairs(airports);
  auto filtered = panel::apply_distance_filter(pairs, f.min_miles, f.max_miles);

  std::set<std::string> codes;
  for (const auto& a : airports) codes.insert(a.code);

  const ingest::YearRange window{y.first, y.last};
  panel::Panel p = panel::build_balanced_panel(std::move(filtered.retained), loaded.records,
                                               window, codes);
  p.meta.airports = airports.size();
  p.meta.enumerated_pairs = pairs.size();
  p.meta.discarded_pairs = filtered.discarded;

  std::vector<ingest::FlightRecord> base_flights;
  for (const auto& r : loaded.records) {
    if (r.year == f.base_year) base_flights.push_back(r);
  }
  const auto base = panel::BaseYearActivity::from_flights(base_flights, f.carrier);
  panel::derive_entry(p, f.carrier, base, {f.count_reentry, f.censor_post_entry});
  panel::classify_exist_new(p, base);

  BuiltPanel out;
  out.panel = std::move(p);
  out.flights_window = std::move(loaded.records);
  out.airports = std::move(airports);
  return out;
}

covariates::CovariateCatalog build_pipeline_catalog(const PipelineFlags& f, const BuiltPanel& built,
                                                    manifest::RunManifest& run) {
  run.add_input(f.cities);
  run.add_input(f.regions);
  run.add_input(f.carriers);
  const auto cities = ingest::load_cities(f.cities);
  const auto regions = ingest::load_airport_regions(f.regions);
  const auto carriers = ingest::load_carriers(f.carriers);
  covariates::CatalogOptions options;
  options.base_year = f.base_year;
  options.subject_carrier = f.carrier;
  options.bankruptcy_year = f.bankr_year;
  return covariates::build_catalog(built.panel, built.flights_window, built.airports, cities,
                                   regions, carriers, options);
}

std::string config_line(const CLI::App& app) {
  std::string line = app.get_name();
  for (const auto* opt : app.get_options()) {
    if (opt->count() == 0) continue;
    line += " " + opt->get_name();
    for (const auto& v : opt->results()) line += "=" + v;
  }
  return line;
}

std::string format_estimate(double estimate, int stars) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f%s", estimate, std::string(stars, '*').c_str());
  return buf;
}

// rater sources: fit JSON, rater CSV (variable,class) or published estimate
// CSV (variable,estimate,stars)
Rater load_rater_source(const std::string& path, double alpha) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw io_error(path + ": cannot open");
    nlohmann::json j;
    in >> j;
    auto rater = agreement::classify_coefficients(estimators::fit_from_json(j), alpha);
    rater.set_provenance(path);
    return rater;
  }
  std::ifstream probe(path);
  if (!probe) throw io_error(path + ": cannot open");
  std::string header;
  std::getline(probe, header);
  probe.close();
  if (header.find("estimate") != std::string::npos) {
    auto rater = agreement::classify_published(ingest::load_published_estimates(path), alpha);
    rater.set_provenance(path);
    return rater;
  }
  return ingest::load_rater_file(path);
}

std::vector<estimators::EstimateView> load_estimate_source(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    std::ifstream in(path);
    if (!in) throw io_error(path + ": cannot open");
    nlohmann::json j;
    in >> j;
    return estimators::estimate_views(estimators::fit_from_json(j));
  }
  return estimators::estimate_views(ingest::load_published_estimates(path));
}

int run_build_panel(const CLI::App& cmd, const PipelineFlags& f, const std::string& out_dir,
                    std::optional<int> merger_year) {
  manifest::RunManifest run("build-panel", config_line(cmd));
  BuiltPanel built = build_pipeline_panel(f, run);
  panel::Panel& p = built.panel;

  if (merger_year) {
    const auto split = panel::split_sample(p, *merger_year);
    p.meta.bef_observations = split.bef.meta.observations;
    p.meta.aft_observations = split.aft.meta.observations;
  }

  fs::create_directories(out_dir);
  panel::export_panel_csv(p, (fs::path(out_dir) / "panel.csv").string());
  std::ofstream meta_out(fs::path(out_dir) / "panel_meta.json");
  meta_out << panel::meta_to_json(p.meta).dump(2) << "\n";
  run.write(out_dir);

  std::cout << "airports " << p.meta.airports << ", enumerated pairs " << p.meta.enumerated_pairs
            << ", discarded " << p.meta.discarded_pairs << ", retained " << p.meta.retained_pairs
            << "\nobservations " << p.meta.observations << " (" << p.meta.retained_pairs << " x "
            << p.meta.years << " years), entries " << p.meta.entries << "\n";
  if (merger_year) {
    std::cout << "split at " << *merger_year << ": " << p.meta.bef_observations << " before, "
              << p.meta.aft_observations << " after\n";
  }
  return exit_ok;
}

int run_covariates(const CLI::App& cmd, const PipelineFlags& f, const std::string& out_dir) {
  manifest::RunManifest run("covariates", config_line(cmd));
  BuiltPanel built = build_pipeline_panel(f, run);
  const auto catalog = build_pipeline_catalog(f, built, run);
  fs::create_directories(out_dir);
  catalog.export_csv(built.panel, (fs::path(out_dir) / "catalog.csv").string());
  std::ofstream meta_out(fs::path(out_dir) / "panel_meta.json");
  meta_out << panel::meta_to_json(built.panel.meta).dump(2) << "\n";
  run.write(out_dir);
  std::cout << "catalog written for " << built.panel.meta.observations << " observations\n";
  return exit_ok;
}

int run_fit(const CLI::App& cmd, const PipelineFlags& f, const std::string& spec_path,
            const std::string& out_dir) {
  manifest::RunManifest run("fit", config_line(cmd));
  run.add_input(spec_path);

  std::ifstream spec_in(spec_path);
  if (!spec_in) throw io_error(spec_path + ": cannot open spec file");
  nlohmann::json spec_json;
  spec_in >> spec_json;
  std::vector<model::ModelSpec> specs;
  if (spec_json.contains("fits")) {
    for (const auto& j : spec_json.at("fits")) specs.push_back(model::spec_from_json(j));
  } else {
    specs.push_back(model::spec_from_json(spec_json));
  }

  BuiltPanel built = build_pipeline_panel(f, run);
  const auto catalog = build_pipeline_catalog(f, built, run);

  fs::create_directories(out_dir);
  std::vector<estimators::FitResult> fits;
  for (const auto& spec : specs) {
    const auto design = covariates::assemble_design(built.panel, catalog, spec);
    estimators::FitResult fit = estimators::fit_model(design, spec);
    std::ofstream jf(fs::path(out_dir) / (spec.name + ".json"));
    jf << estimators::fit_to_json(fit).dump(2) << "\n";
    estimators::fit_table_csv(fit, (fs::path(out_dir) / (spec.name + ".csv")).string());
    std::cout << spec.name << ": lnL " << fit.loglik << ", pseudo-R2 " << fit.pseudo_r2
              << ", n " << fit.n_obs << ", clusters " << fit.n_clusters << "\n";
    fits.push_back(std::move(fit));
  }

  // side-by-side table over the union of variables, published-table style
  std::vector<std::string> order;
  for (const auto& fit : fits) {
    for (const auto& c : fit.coefficients) {
      if (std::find(order.begin(), order.end(), c.name) == order.end()) order.push_back(c.name);
    }
    for (const auto& d : fit.dropped) {
      if (std::find(order.begin(), order.end(), d.name) == order.end()) order.push_back(d.name);
    }
  }
  csv::Writer table((fs::path(out_dir) / "comparison.csv").string());
  std::vector<std::string> header = {"variable"};
  for (const auto& fit : fits) header.push_back(fit.name);
  table.row(header);
  for (const auto& name : order) {
    std::vector<std::string> row = {name};
    for (const auto& fit : fits) {
      const auto* c = fit.find(name);
      if (c) {
        row.push_back(format_estimate(c->estimate, estimators::stars_for_p(c->p)));
      } else {
        bool dropped = false;
        for (const auto& d : fit.dropped) dropped = dropped || d.name == name;
        row.push_back(dropped ? "-" : "");
      }
    }
    table.row(row);
  }
  const auto stat_row = [&](const std::string& label, auto getter) {
    std::vector<std::string> row = {label};
    for (const auto& fit : fits) row.push_back(getter(fit));
    table.row(row);
  };
  stat_row("Estimator", [](const auto& fit) { return std::string(model::estimator_name(fit.estimator)); });
  stat_row("Clusters", [](const auto& fit) { return std::to_string(fit.n_clusters); });
  stat_row("LogLikelihood", [](const auto& fit) { return ingest::format_double(fit.loglik); });
  stat_row("PseudoR2", [](const auto& fit) { return ingest::format_double(fit.pseudo_r2); });
  stat_row("AIC", [](const auto& fit) { return ingest::format_double(fit.aic); });
  stat_row("BIC", [](const auto& fit) { return ingest::format_double(fit.bic); });
  stat_row("Observations", [](const auto& fit) { return std::to_string(fit.n_obs); });

  run.write(out_dir);
  return exit_ok;
}

int run_classify(const CLI::App& cmd, const std::string& source, double alpha,
                 const std::string& out_dir) {
  manifest::RunManifest run("classify", config_line(cmd));
  run.add_input(source);
  const Rater rater = load_rater_source(source, alpha);
  fs::create_directories(out_dir);
  ingest::write_rater((fs::path(out_dir) / "rater.csv").string(), rater);
  run.write(out_dir);
  std::cout << "classified " << rater.size() << " variables at alpha " << alpha << "\n";
  return exit_ok;
}

int run_kappa_single(const CLI::App& cmd, const std::string& a_path, const std::string& b_path,
                     double alpha, std::size_t reps, std::uint64_t seed, unsigned threads,
                     const std::string& out_dir) {
  manifest::RunManifest run("kappa", config_line(cmd));
  run.set_seed(seed);
  run.add_input(a_path);
  run.add_input(b_path);
  const Rater a = load_rater_source(a_path, alpha);
  const Rater b = load_rater_source(b_path, alpha);
  const auto report = agreement::kappa_report(a, b, reps, seed, threads);

  fs::create_directories(out_dir);
  std::ofstream jf(fs::path(out_dir) / "kappa.json");
  jf << agreement::kappa_report_json(report).dump(2) << "\n";
  agreement::agreement_matrix_csv(agreement::align_raters(a, b),
                                  (fs::path(out_dir) / "agreement_matrix.csv").string());
  run.write(out_dir);

  std::cout << "n " << report.point.n << ", Po " << report.point.po << ", Pe " << report.point.pe;
  if (report.point.defined) {
    std::cout << ", kappa " << report.point.kappa << " (" << agreement::strength_label(report.label)
              << "), bootstrap SE " << report.bootstrap.se << "\n";
  } else {
    std::cout << ", kappa undefined (Pe = 1)\n";
  }
  return exit_ok;
}

int run_kappa_batch(const CLI::App& cmd, const std::string& a_dir, const std::string& b_dir,
                    double alpha, std::size_t reps, std::uint64_t seed, unsigned threads,
                    const std::string& out_dir) {
  manifest::RunManifest run("kappa", config_line(cmd));
  run.set_seed(seed);
  const auto collect = [](const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw io_error(dir + ": no rater files found");
    return files;
  };
  const auto a_files = collect(a_dir);
  const auto b_files = collect(b_dir);
  for (const auto& p : a_files) run.add_input(p);
  for (const auto& p : b_files) run.add_input(p);

  fs::create_directories(out_dir);
  csv::Writer grid((fs::path(out_dir) / "kappa_grid.csv").string());
  std::vector<std::string> header = {""};
  for (const auto& b : b_files) header.push_back(fs::path(b).stem().string());
  grid.row(header);
  std::uint64_t cell_seed = seed;
  for (const auto& a_path : a_files) {
    const Rater a = load_rater_source(a_path, alpha);
    std::vector<std::string> row = {fs::path(a_path).stem().string()};
    for (const auto& b_path : b_files) {
      const Rater b = load_rater_source(b_path, alpha);
      const auto report = agreement::kappa_report(a, b, reps, ++cell_seed, threads);
      if (report.point.defined) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3f%s", report.point.kappa,
                      std::string(estimators::stars_for_p(report.bootstrap.p), '*').c_str());
        row.push_back(buf);
      } else {
        row.push_back("undefined");
      }
    }
    grid.row(row);
  }
  run.write(out_dir);
  std::cout << "kappa grid: " << a_files.size() << " x " << b_files.size() << " raters\n";
  return exit_ok;
}

int run_report(const CLI::App& cmd, const std::string& a_path, const std::string& b_path,
               double alpha, const std::string& out_dir) {
  manifest::RunManifest run("report", config_line(cmd));
  run.add_input(a_path);
  run.add_input(b_path);
  const auto views_a = load_estimate_source(a_path);
  const auto views_b = load_estimate_source(b_path);
  const auto flips = estimators::sign_flip_stats(views_a, views_b, alpha);

  fs::create_directories(out_dir);
  ordered_json j;
  j["a"] = a_path;
  j["b"] = b_path;
  j["alpha"] = alpha;
  j["shared"] = flips.shared;
  j["flips"] = flips.flips;
  j["flip_share"] = flips.flip_share;
  j["both_significant"] = flips.both_significant;
  j["significant_flips"] = flips.significant_flips;
  j["significant_flip_share"] = flips.significant_flip_share;
  j["attenuated"] = flips.attenuated;

  const bool both_fits = a_path.size() > 5 && a_path.substr(a_path.size() - 5) == ".json" &&
                         b_path.size() > 5 && b_path.substr(b_path.size() - 5) == ".json";
  if (both_fits) {
    std::ifstream fa(a_path), fb(b_path);
    nlohmann::json ja, jb;
    fa >> ja;
    fb >> jb;
    const auto report = estimators::coefficient_equality_test(estimators::fit_from_json(ja),
                                                              estimators::fit_from_json(jb));
    ordered_json eq;
    eq["wald"] = report.wald;
    eq["df"] = report.wald_df;
    eq["p"] = report.wald_p;
    eq["reject_at_05"] = report.reject_at_05;
    ordered_json vars = ordered_json::array();
    for (const auto& v : report.variables) {
      vars.push_back({{"name", v.name},
                      {"difference", v.difference},
                      {"z", std::isfinite(v.z) ? ordered_json(v.z) : ordered_json("inf")},
                      {"p", v.p}});
    }
    eq["variables"] = std::move(vars);
    j["equality"] = std::move(eq);
  }
  std::ofstream out(fs::path(out_dir) / "report.json");
  out << j.dump(2) << "\n";
  run.write(out_dir);
  std::cout << "shared " << flips.shared << ", sign flips " << flips.flips << " ("
            << flips.flip_share * 100.0 << "%), among both-significant "
            << flips.significant_flips << "/" << flips.both_significant << " ("
            << flips.significant_flip_share * 100.0 << "%)\n";
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"route entry modeling pipeline"};
  app.require_subcommand(1);

  // --- build-panel ---
  PipelineFlags panel_flags;
  std::string panel_out = "out";
  std::optional<int> merger_year;
  auto* cmd_panel = app.add_subcommand("build-panel", "build the balanced airport-pair panel");
  add_panel_flags(cmd_panel, panel_flags, false);
  cmd_panel->add_option("--out", panel_out, "output directory");
  int merger_flag = 0;
  auto* merger_opt = cmd_panel->add_option("--merger-year", merger_flag, "report a BEF/AFT split");

  // --- covariates ---
  PipelineFlags cov_flags;
  std::string cov_out = "out";
  auto* cmd_cov = app.add_subcommand("covariates", "compute the covariate catalog");
  add_panel_flags(cmd_cov, cov_flags, true);
  cmd_cov->add_option("--out", cov_out, "output directory");

  // --- fit ---
  PipelineFlags fit_flags;
  std::string fit_out = "out";
  std::string spec_path;
  auto* cmd_fit = app.add_subcommand("fit", "estimate entry models from a spec file");
  add_panel_flags(cmd_fit, fit_flags, true);
  cmd_fit->add_option("--spec", spec_path, "model spec JSON")->required();
  cmd_fit->add_option("--out", fit_out, "output directory");

  // --- classify ---
  std::string classify_source, classify_out = "out";
  double classify_alpha = 0.10;
  auto* cmd_classify = app.add_subcommand("classify", "classify coefficients into a rater");
  cmd_classify->add_option("--fit", classify_source, "fit JSON or published estimate CSV")
      ->required();
  cmd_classify->add_option("--alpha", classify_alpha, "significance level");
  cmd_classify->add_option("--out", classify_out, "output directory");

  // --- kappa ---
  std::string kappa_a, kappa_b, kappa_a_dir, kappa_b_dir, kappa_out = "out";
  double kappa_alpha = 0.10;
  std::size_t kappa_reps = 2000;
  std::uint64_t kappa_seed = 0;
  unsigned kappa_threads = 1;
  auto* cmd_kappa = app.add_subcommand("kappa", "interrater agreement between two raters");
  cmd_kappa->add_option("--a", kappa_a, "first rater source");
  cmd_kappa->add_option("--b", kappa_b, "second rater source");
  cmd_kappa->add_option("--a-dir", kappa_a_dir, "directory of first raters (batch mode)");
  cmd_kappa->add_option("--b-dir", kappa_b_dir, "directory of second raters (batch mode)");
  cmd_kappa->add_option("--alpha", kappa_alpha, "significance level for classification");
  cmd_kappa->add_option("--reps", kappa_reps, "bootstrap replications");
  auto* kappa_seed_opt = cmd_kappa->add_option("--seed", kappa_seed, "bootstrap seed");
  kappa_seed_opt->required();
  cmd_kappa->add_option("--threads", kappa_threads, "bootstrap worker threads");
  cmd_kappa->add_option("--out", kappa_out, "output directory");

  // --- synth ---
  auto* cmd_synth = app.add_subcommand("synth", "generate synthetic inputs");
  cmd_synth->require_subcommand(1);

  synth::FixtureConfig fixture;
  std::string fixture_years = "2008:2018";
  std::string fixture_out = "fixture";
  bool fixture_seed_set = false;
  auto* cmd_fixture = cmd_synth->add_subcommand("panel-fixture", "ingest-ready panel fixture");
  cmd_fixture->add_option("--airports", fixture.airports, "airport count");
  cmd_fixture->add_option("--oor-pairs", fixture.out_of_range_pairs,
                          "ordered pairs outside the distance band");
  cmd_fixture->add_option("--years", fixture_years, "sample window A:B");
  cmd_fixture->add_option("--base-year", fixture.base_year, "base year");
  cmd_fixture->add_option("--carrier", fixture.subject_carrier, "subject carrier code");
  cmd_fixture->add_option("--served-pairs", fixture.served_pair_target, "served pair target");
  cmd_fixture->add_option("--entry-pairs", fixture.entry_pair_target, "subject entry target");
  cmd_fixture->add_option("--seed", fixture.seed, "generator seed")
      ->required()
      ->each([&](const std::string&) { fixture_seed_set = true; });
  cmd_fixture->add_option("--out", fixture_out, "output directory");

  std::size_t ds_n = 5000, ds_k = 3, ds_dummies = 0, ds_groups = 0;
  std::string ds_beta = "0.5,-1.0,0.25", ds_link = "probit", ds_out = "dataset";
  double ds_intercept = 0.0, ds_group_sd = 0.0;
  std::uint64_t ds_seed = 0;
  auto* cmd_dataset = cmd_synth->add_subcommand("dataset", "synthetic estimation dataset");
  cmd_dataset->add_option("--n", ds_n, "observations");
  cmd_dataset->add_option("--k", ds_k, "regressors");
  cmd_dataset->add_option("--beta", ds_beta, "true coefficients, comma separated");
  cmd_dataset->add_option("--intercept", ds_intercept, "latent intercept (event rarity)");
  cmd_dataset->add_option("--link", ds_link, "probit or logit");
  cmd_dataset->add_option("--dummies", ds_dummies, "leading 0/1 regressors");
  cmd_dataset->add_option("--groups", ds_groups, "group count for a random intercept");
  cmd_dataset->add_option("--group-sd", ds_group_sd, "group effect SD");
  cmd_dataset->add_option("--seed", ds_seed, "generator seed")->required();
  cmd_dataset->add_option("--out", ds_out, "output directory");

  // --- report ---
  std::string report_a, report_b, report_out = "out";
  double report_alpha = 0.10;
  auto* cmd_report = app.add_subcommand("report", "compare two fits: equality tests, sign flips");
  cmd_report->add_option("--a", report_a, "first fit JSON or published CSV")->required();
  cmd_report->add_option("--b", report_b, "second fit JSON or published CSV")->required();
  cmd_report->add_option("--alpha", report_alpha, "significance level");
  cmd_report->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_panel->parsed()) {
      if (merger_opt->count() > 0) merger_year = merger_flag;
      return run_build_panel(*cmd_panel, panel_flags, panel_out, merger_year);
    }
    if (cmd_cov->parsed()) return run_covariates(*cmd_cov, cov_flags, cov_out);
    if (cmd_fit->parsed()) return run_fit(*cmd_fit, fit_flags, spec_path, fit_out);
    if (cmd_classify->parsed()) {
      return run_classify(*cmd_classify, classify_source, classify_alpha, classify_out);
    }
    if (cmd_kappa->parsed()) {
      const bool batch = !kappa_a_dir.empty() || !kappa_b_dir.empty();
      if (batch) {
        if (kappa_a_dir.empty() || kappa_b_dir.empty()) {
          throw io_error("batch mode needs both --a-dir and --b-dir");
        }
        return run_kappa_batch(*cmd_kappa, kappa_a_dir, kappa_b_dir, kappa_alpha, kappa_reps,
                               kappa_seed, kappa_threads, kappa_out);
      }
      if (kappa_a.empty() || kappa_b.empty()) throw io_error("kappa needs --a and --b sources");
      return run_kappa_single(*cmd_kappa, kappa_a, kappa_b, kappa_alpha, kappa_reps, kappa_seed,
                              kappa_threads, kappa_out);
    }
    if (cmd_fixture->parsed()) {
      const YearsFlag y = parse_years(fixture_years);
      fixture.first_year = y.first;
      fixture.years = y.last - y.first + 1;
      manifest::RunManifest run("synth panel-fixture", config_line(*cmd_fixture));
      run.set_seed(fixture.seed);
      const auto truth = synth::make_panel_fixture(fixture, fixture_out);
      run.write(fixture_out);
      std::cout << "fixture: " << truth.airports << " airports, " << truth.enumerated_pairs
                << " pairs, " << truth.out_of_range_pairs << " out of range, "
                << truth.retained_pairs << " retained, expected observations "
                << truth.expected_observations << "\n";
      return exit_ok;
    }
    if (cmd_dataset->parsed()) {
      synth::SynthConfig config;
      config.n = ds_n;
      config.k = ds_k;
      for (const auto& tok : csv::split_line(ds_beta)) config.beta.push_back(std::stod(tok));
      config.intercept = ds_intercept;
      config.link = synth::link_from_name(ds_link);
      config.n_dummies = ds_dummies;
      config.groups = ds_groups;
      config.group_sd = ds_group_sd;
      config.seed = ds_seed;
      manifest::RunManifest run("synth dataset", config_line(*cmd_dataset));
      run.set_seed(ds_seed);
      const auto data = synth::generate(config);
      fs::create_directories(ds_out);
      synth::write_dataset_csv(data, (fs::path(ds_out) / "design.csv").string());
      std::ofstream tf(fs::path(ds_out) / "truth.json");
      tf << synth::truth_to_json(data.truth).dump(2) << "\n";
      run.write(ds_out);
      std::cout << "dataset: n " << config.n << ", positive rate " << data.truth.positive_rate
                << "\n";
      return exit_ok;
    }
    if (cmd_report->parsed()) {
      return run_report(*cmd_report, report_a, report_b, report_alpha, report_out);
    }
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numeric;
  } catch (const io_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return exit_input;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_input;
  }
  return exit_ok;
}
