#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hila/embeddings/io.hpp"
#include "hila/embeddings/synthetic.hpp"
#include "hila/harness/reports.hpp"

namespace hila::harness {

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"n_patients", s.n_patients},
          {"n_regions", s.n_regions},
          {"patches_per_region", s.patches_per_region},
          {"d", s.d},
          {"n_prompts_patch", s.n_prompts_patch},
          {"n_prompts_region", s.n_prompts_region},
          {"signal_fraction", s.signal_fraction},
          {"noise_sigma", s.noise_sigma},
          {"censor_rate", s.censor_rate},
          {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "n_patients") s.n_patients = v.get<std::size_t>();
      else if (k == "n_regions") s.n_regions = v.get<std::size_t>();
      else if (k == "patches_per_region") s.patches_per_region = v.get<std::size_t>();
      else if (k == "d") s.d = v.get<std::size_t>();
      else if (k == "n_prompts_patch") s.n_prompts_patch = v.get<std::size_t>();
      else if (k == "n_prompts_region") s.n_prompts_region = v.get<std::size_t>();
      else if (k == "signal_fraction") s.signal_fraction = v.get<double>();
      else if (k == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (k == "censor_rate") s.censor_rate = v.get<double>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown synthetic spec key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synthetic spec value: ") + e.what());
  }
  return s;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing file " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

namespace cli_detail {

/// Flag values; unset ones leave the config file (or default) in place.
struct ConfigFlags {
  std::optional<int> epochs, batch_size, bins, folds, sinkhorn_max_iters;
  std::optional<double> lr, r, lambda, sinkhorn_epsilon, sinkhorn_tol, temperature;
  std::optional<std::size_t> queue_length, attention_dim;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<bool> region_tokens, cross_level, contrastive, reset_queues;
  std::string config_file;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON file setting any training field");
    app->add_option("--epochs", epochs);
    app->add_option("--lr", lr);
    app->add_option("--batch-size", batch_size);
    app->add_option("--r", r, "fraction of tokens kept per level");
    app->add_option("--queue-length", queue_length, "B; each memory queue holds B-1 prototypes");
    app->add_option("--lambda", lambda, "weight of the contrastive loss");
    app->add_option("--bins", bins, "number of discrete time bins T");
    app->add_option("--sinkhorn-epsilon", sinkhorn_epsilon);
    app->add_option("--sinkhorn-tol", sinkhorn_tol);
    app->add_option("--sinkhorn-max-iters", sinkhorn_max_iters);
    app->add_option("--seed", seed);
    app->add_option("--variant", variant, "ablation variant A-G");
    app->add_option("--folds", folds);
    app->add_option("--temperature", temperature);
    app->add_option("--attention-dim", attention_dim);
    app->add_option("--region-tokens", region_tokens, "override the variant's region-token switch (true/false)");
    app->add_option("--cross-level", cross_level, "override the cross-level propagation switch (true/false)");
    app->add_option("--contrastive", contrastive, "override the contrastive-learning switch (true/false)");
    app->add_option("--reset-queues", reset_queues, "clear memory queues at every epoch (true/false)");
  }

  TrainConfig resolve() const {
    TrainConfig c;
    if (!config_file.empty()) apply_json(c, read_json_file(config_file));
    if (epochs) c.epochs = *epochs;
    if (lr) c.lr = *lr;
    if (batch_size) c.batch_size = *batch_size;
    if (r) c.r = *r;
    if (queue_length) c.queue_length = *queue_length;
    if (lambda) c.lambda = *lambda;
    if (bins) c.bins = *bins;
    if (sinkhorn_epsilon) c.sinkhorn.epsilon = *sinkhorn_epsilon;
    if (sinkhorn_tol) c.sinkhorn.tol = *sinkhorn_tol;
    if (sinkhorn_max_iters) c.sinkhorn.max_iters = *sinkhorn_max_iters;
    if (seed) c.seed = *seed;
    if (variant) c.variant = parse_variant(*variant);
    if (folds) c.folds = *folds;
    if (temperature) c.temperature = *temperature;
    if (attention_dim) c.attention_dim = *attention_dim;
    if (region_tokens) c.region_tokens = *region_tokens;
    if (cross_level) c.cross_level = *cross_level;
    if (contrastive) c.contrastive = *contrastive;
    if (reset_queues) c.reset_queues_each_epoch = *reset_queues;
    c.validate();
    return c;
  }
};

struct CohortSource {
  std::string manifest;
  std::string synth;  // SynthSpec JSON path or "default"

  void attach(CLI::App* app) {
    auto* m = app->add_option("--manifest", manifest, "cohort manifest (JSON)");
    auto* s = app->add_option("--synth", synth, "generate the cohort in memory from a synthetic spec file, or 'default'");
    m->excludes(s);
  }

  std::pair<Cohort, nlohmann::json> load() const {
    if (!manifest.empty()) {
      Cohort c = load_cohort(manifest);
      return {std::move(c), nlohmann::json{{"source", "manifest"}, {"manifest", manifest}}};
    }
    if (synth.empty()) throw ConfigError("one of --manifest or --synth is required");
    const SynthSpec spec = synth == "default" ? SynthSpec{} : synth_spec_from_json(read_json_file(synth));
    return {generate_synthetic(spec).cohort, nlohmann::json{{"source", "synthetic"}, {"spec", to_json(spec)}}};
  }
};

inline nlohmann::json describe_cohort(const Cohort& c, nlohmann::json info) {
  std::size_t events = 0;
  for (const auto& p : c.patients) events += p.censor == 0;
  info["n_patients"] = c.patients.size();
  info["n_events"] = events;
  info["d"] = c.dim();
  info["n_prompts_patch"] = c.patch_prompts.size();
  info["n_prompts_region"] = c.region_prompts.size();
  return info;
}

inline void print_summary(std::ostream& out, const std::vector<CrossValidation>& runs) {
  for (const auto& r : runs) {
    out << "variant " << to_string(r.variant) << "  C-index " << r.summary.formatted() << "  (" << r.summary.folds_used
        << " folds)\n";
  }
}

inline int km_export(const std::string& risk_csv, const std::string& out_dir, std::ostream& out) {
  const CsvTable t = read_csv(risk_csv);
  const std::size_t ct = t.column("time"), cc = t.column("censor"), cr = t.column("risk");
  std::vector<metrics::RiskedPatient> rp;
  try {
    for (const auto& row : t.rows) rp.push_back({std::stod(row[cr]), std::stod(row[ct]), std::stoi(row[cc])});
  } catch (const std::exception&) {
    throw IoError("non-numeric time/censor/risk value in " + risk_csv);
  }
  const auto strata = metrics::stratify_median(rp);
  const auto low = metrics::gather(rp, strata.low);
  const auto high = metrics::gather(rp, strata.high);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir);
  {
    CsvWriter km(fs::path(out_dir) / "km.csv", {"stratum", "time", "survival", "at_risk"});
    if (!low.empty()) write_km_rows(km, {}, "low", metrics::kaplan_meier(low), static_cast<long>(low.size()));
    if (!high.empty()) write_km_rows(km, {}, "high", metrics::kaplan_meier(high), static_cast<long>(high.size()));
  }
  const auto lr = metrics::logrank_test(low, high);
  nlohmann::json j{{"median_risk", strata.median},         {"n_low", low.size()},
                   {"n_high", high.size()},                {"chi_square", lr.chi_square},
                   {"p_value", lr.p_value},                {"observed_low", lr.observed_a},
                   {"expected_low", lr.expected_a},        {"variance", lr.variance}};
  std::ofstream lo(fs::path(out_dir) / "logrank.json");
  if (!lo) throw IoError("cannot write logrank.json in " + out_dir);
  lo << j.dump(2) << '\n';
  out << "log-rank chi2 = " << lr.chi_square << ", p = " << lr.p_value << " (low " << low.size() << ", high "
      << high.size() << ")\n";
  return 0;
}

}  // namespace cli_detail

/// Entry point shared by the executable and the tests. Returns the process
/// exit code: 0 on success, otherwise the ErrorCategory value of the failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Hierarchical vision-language survival prediction on token-bag cohorts", "hila"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic cohort (manifest + embedding files)");
  std::string synth_spec_file, synth_out;
  SynthSpec flag_spec;
  std::optional<std::size_t> s_patients, s_regions, s_ppr, s_d, s_np, s_nr;
  std::optional<double> s_signal, s_noise, s_censor;
  std::optional<std::uint64_t> s_seed;
  synth->add_option("--spec", synth_spec_file, "synthetic spec JSON; flags override its fields");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-patients", s_patients);
  synth->add_option("--n-regions", s_regions);
  synth->add_option("--patches-per-region", s_ppr);
  synth->add_option("--d", s_d);
  synth->add_option("--n-prompts-patch", s_np);
  synth->add_option("--n-prompts-region", s_nr);
  synth->add_option("--signal-fraction", s_signal);
  synth->add_option("--noise-sigma", s_noise);
  synth->add_option("--censor-rate", s_censor);
  synth->add_option("--seed", s_seed);

  // train / cv / ablate
  cli_detail::ConfigFlags train_flags, cv_flags, ablate_flags;
  cli_detail::CohortSource train_src, cv_src, ablate_src;
  std::string train_out, cv_out, ablate_out, ablate_variants = "A,B,C,D,E,F,G";
  int train_fold_index = 0;
  auto* train = app.add_subcommand("train", "train on k-1 folds and evaluate the held-out fold (single split)");
  train_flags.attach(train);
  train_src.attach(train);
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--holdout-fold", train_fold_index, "which fold to hold out");
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv_flags.attach(cv);
  cv_src.attach(cv);
  cv->add_option("--out", cv_out, "output directory")->required();
  auto* ablate = app.add_subcommand("ablate", "cross-validate ablation variants");
  ablate_flags.attach(ablate);
  ablate_src.attach(ablate);
  ablate->add_option("--out", ablate_out, "output directory")->required();
  ablate->add_option("--variants", ablate_variants, "comma-separated variant ids");

  // km-export
  std::string km_risks, km_out;
  auto* km = app.add_subcommand("km-export", "recompute KM curves and the log-rank test from a risk CSV");
  km->add_option("--risks", km_risks, "CSV with time, censor and risk columns")->required();
  km->add_option("--out", km_out, "output directory")->required();

  std::vector<std::string> argv_store{"hila"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorCategory::config);
  }

  try {
    if (synth->parsed()) {
      SynthSpec spec = synth_spec_file.empty() ? SynthSpec{} : synth_spec_from_json(read_json_file(synth_spec_file));
      if (s_patients) spec.n_patients = *s_patients;
      if (s_regions) spec.n_regions = *s_regions;
      if (s_ppr) spec.patches_per_region = *s_ppr;
      if (s_d) spec.d = *s_d;
      if (s_np) spec.n_prompts_patch = *s_np;
      if (s_nr) spec.n_prompts_region = *s_nr;
      if (s_signal) spec.signal_fraction = *s_signal;
      if (s_noise) spec.noise_sigma = *s_noise;
      if (s_censor) spec.censor_rate = *s_censor;
      if (s_seed) spec.seed = *s_seed;
      const auto gen = generate_synthetic(spec);
      const auto manifest = write_cohort(gen.cohort, synth_out);
      std::ofstream(fs::path(synth_out) / "synth_spec.json") << to_json(spec).dump(2) << '\n';
      out << "wrote " << gen.cohort.patients.size() << " patients to " << manifest.string() << '\n';
      return 0;
    }
    if (train->parsed() || cv->parsed()) {
      const bool single = train->parsed();
      const auto& flags = single ? train_flags : cv_flags;
      const auto& src = single ? train_src : cv_src;
      const TrainConfig cfg = flags.resolve();
      auto [cohort, info] = src.load();
      std::vector<CrossValidation> runs;
      runs.push_back(cross_validate(cohort, cfg, single ? std::optional<int>(train_fold_index) : std::nullopt));
      emit_reports(runs, cfg, cli_detail::describe_cohort(cohort, info), single ? train_out : cv_out);
      cli_detail::print_summary(out, runs);
      return 0;
    }
    if (ablate->parsed()) {
      const TrainConfig cfg = ablate_flags.resolve();
      std::vector<Variant> variants;
      std::stringstream ss(ablate_variants);
      for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) variants.push_back(parse_variant(tok));
      auto [cohort, info] = ablate_src.load();
      const auto runs = run_ablation(cohort, cfg, variants);
      emit_reports(runs, cfg, cli_detail::describe_cohort(cohort, info), ablate_out);
      cli_detail::print_summary(out, runs);
      return 0;
    }
    if (km->parsed()) return cli_detail::km_export(km_risks, km_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hila::harness
