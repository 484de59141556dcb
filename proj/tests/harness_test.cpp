#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "hila/harness/cli.hpp"
#include "support.hpp"

using namespace hila;
using namespace hila::harness;
namespace fs = std::filesystem;

namespace {

Cohort small_cohort() {
  SynthSpec s;
  s.n_patients = 40;
  s.n_regions = 4;
  s.patches_per_region = 6;
  s.d = 12;
  s.n_prompts_patch = 3;
  s.n_prompts_region = 3;
  return generate_synthetic(s).cohort;
}

TrainConfig quick(Variant v) {
  TrainConfig c;
  c.variant = v;
  c.epochs = 3;
  c.folds = 4;
  c.bins = 3;
  return c;
}

std::vector<double> all_risks(const CrossValidation& cv) {
  std::vector<double> out;
  for (const auto& f : cv.folds)
    for (const auto& r : f.risks) out.push_back(r.risk);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hila_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, PublishedDefaults) {
  const TrainConfig c;
  EXPECT_EQ(c.r, 0.6);
  EXPECT_EQ(c.queue_length, 20u);
  EXPECT_EQ(c.lambda, 0.01);
  EXPECT_EQ(c.lr, 2e-4);
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.batch_size, 1);
}

TEST(Config, VariantLattice) {
  EXPECT_TRUE(switches_for(Variant::A).attention_pool());
  EXPECT_EQ(switches_for(Variant::D).patch_scorer, PatchScorer::transport);
  EXPECT_FALSE(switches_for(Variant::D).region_tokens);
  EXPECT_TRUE(switches_for(Variant::E).region_tokens);
  EXPECT_TRUE(switches_for(Variant::F).cross_level);
  EXPECT_FALSE(switches_for(Variant::F).contrastive);
  TrainConfig f = quick(Variant::F);
  f.contrastive = true;
  EXPECT_EQ(f.switches(), switches_for(Variant::G));
  EXPECT_THROW((void)parse_variant("H"), ConfigError);
}

TEST(Config, JsonRoundTripAndUnknownKey) {
  TrainConfig c = quick(Variant::E);
  c.cross_level = true;
  TrainConfig back;
  apply_json(back, to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(apply_json(back, nlohmann::json{{"epoch", 3}}), ConfigError);
  TrainConfig bad = quick(Variant::D);
  bad.contrastive = true;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Folds, PartitionIsDisjointAndComplete) {
  const Cohort c = small_cohort();
  const auto folds = make_folds(c, 4, 7);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    EXPECT_GE(f.size(), 9u);
    for (auto i : f) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), c.patients.size());
  EXPECT_EQ(make_folds(c, 4, 7), folds);
}

TEST(Training, DeterministicAcrossRuns) {
  const Cohort c = small_cohort();
  const auto a = cross_validate(c, quick(Variant::G));
  const auto b = cross_validate(c, quick(Variant::G));
  EXPECT_EQ(all_risks(a), all_risks(b));
  EXPECT_EQ(a.folds[0].epoch_loss, b.folds[0].epoch_loss);
}

TEST(Training, ZeroLambdaEqualsContrastiveDisabled) {
  const Cohort c = small_cohort();
  TrainConfig zero = quick(Variant::G);
  zero.lambda = 0.0;
  const auto a = cross_validate(c, zero);
  const auto b = cross_validate(c, quick(Variant::F));
  EXPECT_EQ(all_risks(a), all_risks(b));
}

TEST(Training, SwitchOverrideReproducesFullModel) {
  const Cohort c = small_cohort();
  TrainConfig f = quick(Variant::F);
  f.contrastive = true;
  const auto a = cross_validate(c, f);
  const auto g = cross_validate(c, quick(Variant::G));
  EXPECT_EQ(all_risks(a), all_risks(g));
  for (std::size_t k = 0; k < a.folds.size(); ++k) EXPECT_EQ(a.folds[k].epoch_loss, g.folds[k].epoch_loss);
}

TEST(Training, EveryVariantRuns) {
  const Cohort c = small_cohort();
  TrainConfig cfg = quick(Variant::A);
  cfg.epochs = 1;
  for (Variant v : all_variants()) {
    cfg.variant = v;
    const auto cv = cross_validate(c, cfg, 0);
    ASSERT_EQ(cv.folds.size(), 1u) << to_string(v);
    EXPECT_GT(cv.folds[0].steps, 0u);
  }
}

TEST(Training, LossDecreasesOnPlantedCohort) {
  const Cohort c = small_cohort();
  TrainConfig cfg = quick(Variant::G);
  cfg.epochs = 20;
  cfg.lr = 2e-3;
  const auto cv = cross_validate(c, cfg, 0);
  const auto& loss = cv.folds[0].epoch_loss;
  EXPECT_LT(loss.back(), loss.front());
}

TEST(Training, MissingPromptsIsConfigError) {
  Cohort c = small_cohort();
  c.patch_prompts = {};
  EXPECT_THROW((void)cross_validate(c, quick(Variant::D)), ConfigError);
  EXPECT_NO_THROW((void)cross_validate(c, [] {
    TrainConfig a = quick(Variant::A);
    a.epochs = 1;
    return a;
  }()));
}

TEST(Summary, TableStyleFormatting) {
  Summary s{0.6594, 0.0441, 5};
  EXPECT_EQ(s.formatted(), "0.659 \xC2\xB1 0.044");
  EXPECT_EQ(Summary{}.formatted(), "NA");
  std::vector<FoldReport> folds(3);
  folds[0].c_index = 0.6;
  folds[2].c_index = 0.8;
  const auto sum = summarize(folds);
  EXPECT_EQ(sum.folds_used, 2u);
  EXPECT_NEAR(*sum.mean, 0.7, 1e-15);
  EXPECT_NEAR(*sum.std, std::sqrt(0.02), 1e-15);
}

TEST(Reports, CsvParsesBackToSameValues) {
  const Cohort c = small_cohort();
  const auto cv = cross_validate(c, quick(Variant::E));
  const fs::path dir = scratch("reports");
  emit_reports({cv}, quick(Variant::E), nlohmann::json::object(), dir);
  const CsvTable t = read_csv(dir / "risks.csv");
  const auto col = t.column("risk");
  const auto risks = all_risks(cv);
  ASSERT_EQ(t.rows.size(), risks.size());
  for (std::size_t i = 0; i < risks.size(); ++i) EXPECT_EQ(std::stod(t.rows[i][col]), risks[i]);
  const CsvTable folds = read_csv(dir / "folds.csv");
  for (std::size_t k = 0; k < cv.folds.size(); ++k)
    EXPECT_EQ(std::stod(folds.rows[k][folds.column("c_index")]), *cv.folds[k].c_index);
}

TEST(Reports, MetadataRecordsDefaults) {
  const fs::path dir = scratch("meta");
  emit_reports({}, TrainConfig{}, nlohmann::json::object(), dir);
  std::ifstream in(dir / "metadata.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["config"]["r"], 0.6);
  EXPECT_EQ(j["config"]["queue_length"], 20);
  EXPECT_EQ(j["config"]["lambda"], 0.01);
  EXPECT_EQ(j["config"]["lr"], 2e-4);
  EXPECT_EQ(j["config"]["epochs"], 20);
  EXPECT_EQ(j["config"]["batch_size"], 1);
  EXPECT_NE(j["risk_score_convention"].get<std::string>().find("higher means riskier"), std::string::npos);
}

TEST(Cli, SynthThenCvIsByteStable) {
  const fs::path cohort_dir = scratch("cli_cohort");
  std::ostringstream out, err;
  ASSERT_EQ(run_cli({"synth", "--out", cohort_dir.string(), "--n-patients", "30", "--n-regions", "3",
                     "--patches-per-region", "4", "--d", "10", "--n-prompts-patch", "2", "--n-prompts-region", "2"},
                    out, err),
            0)
      << err.str();
  const std::string manifest = (cohort_dir / "manifest.json").string();
  const fs::path a = scratch("cli_a"), b = scratch("cli_b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(run_cli({"cv", "--manifest", manifest, "--epochs", "2", "--folds", "3", "--bins", "3", "--out",
                       dir.string()},
                      out, err),
              0)
        << err.str();
  }
  for (const char* f : {"summary.csv", "folds.csv", "risks.csv", "km.csv", "losses.csv", "metadata.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

  const fs::path km = scratch("cli_km");
  EXPECT_EQ(run_cli({"km-export", "--risks", (a / "risks.csv").string(), "--out", km.string()}, out, err), 0)
      << err.str();
  EXPECT_TRUE(fs::exists(km / "logrank.json"));
}

TEST(Cli, ExitCodesFollowErrorCategory) {
  std::ostringstream out, err;
  EXPECT_EQ(run_cli({"cv", "--manifest", "/nonexistent/manifest.json", "--out", scratch("x").string()}, out, err), 3);
  EXPECT_EQ(run_cli({"cv", "--synth", "default", "--variant", "Q", "--out", scratch("y").string()}, out, err), 2);
  EXPECT_EQ(run_cli({"cv", "--synth", "default", "--lambda", "-1", "--out", scratch("z").string()}, out, err), 2);
  EXPECT_EQ(run_cli({"bogus"}, out, err), 2);
  EXPECT_EQ(run_cli({"--help"}, out, err), 0);
}
