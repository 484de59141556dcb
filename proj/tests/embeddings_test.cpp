#include <algorithm>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "hila/embeddings/discretize.hpp"
#include "hila/embeddings/io.hpp"
#include "hila/embeddings/synthetic.hpp"
#include "hila/log.hpp"
#include "hila/opl.hpp"

using namespace hila;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hila_emb_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthSpec small_spec() {
  SynthSpec s;
  s.n_patients = 12;
  s.n_regions = 4;
  s.patches_per_region = 5;
  s.d = 12;
  return s;
}

PatientRecord timed(double t, int censor) {
  PatientRecord p;
  p.time = t;
  p.censor = censor;
  return p;
}

}  // namespace

TEST(EmbeddingIo, CohortRoundTripIsBitIdentical) {
  const Cohort c = generate_synthetic(small_spec()).cohort;
  const fs::path dir = scratch("roundtrip");
  const Cohort back = load_cohort(write_cohort(c, dir));
  ASSERT_EQ(back.patients.size(), c.patients.size());
  EXPECT_EQ(back.patch_prompts.prompts, c.patch_prompts.prompts);
  EXPECT_EQ(back.region_prompts.prompts, c.region_prompts.prompts);
  for (std::size_t i = 0; i < c.patients.size(); ++i) {
    const auto& a = c.patients[i];
    const auto& b = back.patients[i];
    EXPECT_EQ(a.patient_id, b.patient_id);
    EXPECT_EQ(a.time, b.time);
    EXPECT_EQ(a.censor, b.censor);
    EXPECT_EQ(a.patch_bag.tokens, b.patch_bag.tokens);
    EXPECT_EQ(a.region_bag.tokens, b.region_bag.tokens);
    EXPECT_EQ(a.patch_bag.parent_region, b.patch_bag.parent_region);
  }
}

TEST(EmbeddingIo, DimensionMismatchNamesBothFiles) {
  Cohort c = generate_synthetic(small_spec()).cohort;
  const fs::path dir = scratch("dmismatch");
  write_cohort(c, dir);
  write_embedding(dir / "P3_patch.emb", Matrix(c.patients[3].patch_bag.size(), 5, 0.5));
  try {
    (void)load_cohort(dir / "manifest.json");
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("P3_patch.emb"), std::string::npos) << msg;
    EXPECT_NE(msg.find("P0_patch.emb"), std::string::npos) << msg;
  }
}

TEST(EmbeddingIo, MissingAndTruncatedFilesAreIoErrors) {
  const fs::path dir = scratch("io");
  EXPECT_THROW((void)read_embedding(dir / "absent.emb"), IoError);
  write_embedding(dir / "m.emb", Matrix{{1, 2}, {3, 4}});
  fs::resize_file(dir / "m.emb", fs::file_size(dir / "m.emb") - 3);
  EXPECT_THROW((void)read_embedding(dir / "m.emb"), IoError);
  EXPECT_THROW((void)load_cohort(dir / "no_manifest.json"), IoError);
}

TEST(EmbeddingIo, NonFiniteEntryIsDomainError) {
  const fs::path dir = scratch("nan");
  write_embedding(dir / "m.emb", Matrix{{1, std::nan("")}});
  EXPECT_THROW((void)read_embedding(dir / "m.emb"), DomainError);
}

TEST(EmbeddingIo, ParentOutOfRangeIsRejected) {
  Cohort c = generate_synthetic(small_spec()).cohort;
  c.patients[0].patch_bag.parent_region[2] = 99;
  EXPECT_THROW(validate_cohort(c), DimensionError);
}

TEST(Synthetic, DeterministicForSeed) {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  for (std::size_t i = 0; i < a.cohort.patients.size(); ++i) {
    EXPECT_EQ(a.cohort.patients[i].patch_bag.tokens, b.cohort.patients[i].patch_bag.tokens);
    EXPECT_EQ(a.cohort.patients[i].time, b.cohort.patients[i].time);
  }
  SynthSpec other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate_synthetic(other).cohort.patients[0].patch_bag.tokens, a.cohort.patients[0].patch_bag.tokens);
}

TEST(Synthetic, RegionTokenIsChildMeanPlusComponent) {
  const auto s = generate_synthetic(small_spec());
  for (std::size_t n = 0; n < s.cohort.patients.size(); ++n) {
    const auto& p = s.cohort.patients[n];
    for (std::size_t r = 0; r < p.region_bag.size(); ++r) {
      for (std::size_t j = 0; j < p.region_bag.dim(); ++j) {
        double mean = 0.0, count = 0.0;
        for (std::size_t i = 0; i < p.patch_bag.size(); ++i) {
          if (p.patch_bag.parent_region[i] != r) continue;
          mean += p.patch_bag.tokens(i, j);
          count += 1.0;
        }
        mean /= count;
        EXPECT_NEAR(p.region_bag.tokens(r, j), mean + s.region_component[n](r, j), 1e-12);
      }
    }
  }
}

TEST(Synthetic, NoiselessSelectionRecoversPlantedTokens) {
  SynthSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  const auto s = generate_synthetic(spec);
  for (std::size_t n = 0; n < s.cohort.patients.size(); ++n) {
    const auto& p = s.cohort.patients[n];
    const auto sel = opl::match(p.patch_bag.tokens, s.cohort.patch_prompts.prompts, spec.signal_fraction, {}).selected;
    std::vector<std::size_t> planted;
    for (std::size_t i = 0; i < s.patch_signal[n].size(); ++i)
      if (s.patch_signal[n][i]) planted.push_back(i);
    EXPECT_EQ(sel, planted) << "patient " << p.patient_id;
  }
}

TEST(Synthetic, RejectsTooSmallDimension) {
  SynthSpec spec = small_spec();
  spec.d = 9;
  EXPECT_THROW((void)generate_synthetic(spec), ConfigError);
}

TEST(Discretize, EdgesComeFromUncensoredTimesOnly) {
  const std::vector<PatientRecord> ps{timed(5, 0), timed(1, 0), timed(100, 1), timed(3, 0), timed(0.5, 1),
                                      timed(9, 0), timed(7, 0)};
  // uncensored sorted: 1 3 5 7 9; type-7 quantiles at 0, 1/3, 2/3, 1
  // h = 4q: 0 -> 1, 4/3 -> 3 + (1/3)(2), 8/3 -> 5 + (2/3)(2), 4 -> 9
  const auto e = quantile_edges(ps, 3);
  ASSERT_EQ(e.size(), 4u);
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], 3.0 + 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(e[2], 5.0 + 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(e[3], 9.0);
}

TEST(Discretize, BinsAreRightClosedAndMonotone) {
  const std::vector<double> e{1.0, 3.0, 6.0, 9.0};
  EXPECT_EQ(time_bin(e, 0.2), 1);
  EXPECT_EQ(time_bin(e, 3.0), 1);
  EXPECT_EQ(time_bin(e, 3.0001), 2);
  EXPECT_EQ(time_bin(e, 6.0), 2);
  EXPECT_EQ(time_bin(e, 50.0), 3);
  int prev = 1;
  for (double t = 0.1; t < 12.0; t += 0.05) {
    const int b = time_bin(e, t);
    EXPECT_GE(b, prev);
    prev = b;
  }
}

TEST(Discretize, PreconditionsAndDuplicateWarning) {
  Cohort c;
  c.patients = {timed(2, 0), timed(2, 0), timed(2, 0), timed(4, 1)};
  EXPECT_THROW(discretize_times(c, 1), ConfigError);
  EXPECT_THROW(discretize_times(c, 5), ConfigError);
  std::vector<std::string> warnings;
  {
    log::ScopedCapture cap([&](const std::string& m) { warnings.push_back(m); });
    discretize_times(c, 2);
  }
  ASSERT_EQ(warnings.size(), 1u);
  for (const auto& p : c.patients) EXPECT_TRUE(p.time_bin >= 1 && p.time_bin <= 2);
}
