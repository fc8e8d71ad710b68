#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "uwipt/data/dataset.hpp"
#include "uwipt/data/image_io.hpp"
#include "uwipt/data/transforms.hpp"

using namespace uwipt;
namespace fs = std::filesystem;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
long mirror(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

Image box3_oracle(const Image& img) {
  Image out(img.width, img.height);
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        int sum = 0;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            sum += img.at(static_cast<std::size_t>(mirror(x + dx, w)), static_cast<std::size_t>(mirror(y + dy, h)), c);
          }
        }
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) =
            static_cast<std::uint8_t>(std::lround(sum / 9.0));
      }
    }
  }
  return out;
}

double laplacian_variance(const Image& img) {
  std::vector<double> v;
  for (std::size_t y = 1; y + 1 < img.height; ++y) {
    for (std::size_t x = 1; x + 1 < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        v.push_back(4.0 * img.at(x, y, c) - img.at(x - 1, y, c) - img.at(x + 1, y, c) - img.at(x, y - 1, c) -
                    img.at(x, y + 1, c));
      }
    }
  }
  double m = 0.0, s = 0.0;
  for (double d : v) m += d;
  m /= static_cast<double>(v.size());
  for (double d : v) s += (d - m) * (d - m);
  return s / static_cast<double>(v.size());
}

double psnr_oracle(const Image& a, const Image& b) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    se += d * d;
  }
  return 10.0 * std::log10(255.0 * 255.0 * static_cast<double>(a.pixels.size()) / se);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("uwipt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Smooth, ConstantImageUnchanged) {
  const Image img(7, 5, 93);
  EXPECT_EQ(smooth3x3(img), img);
  EXPECT_EQ(smooth3x3(img, SmoothKind::Gaussian), img);
}

TEST(Smooth, CenteredWhitePixel) {
  Image img(3, 3, 0);
  for (std::size_t c = 0; c < 3; ++c) img.at(1, 1, c) = 255;
  const Image out = smooth3x3(img);
  EXPECT_EQ(out.at(1, 1, 0), 28);  // round(255 / 9)
  // A corner's mirrored neighbourhood holds the center pixel four times.
  EXPECT_EQ(out.at(0, 0, 0), static_cast<std::uint8_t>(std::lround(4 * 255 / 9.0)));
  EXPECT_EQ(out, box3_oracle(img));
}

TEST(Smooth, MatchesBruteForceBoxFilter) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Image img = random_image(9 + seed, 6 + seed, seed);
    EXPECT_EQ(smooth3x3(img), box3_oracle(img)) << "seed " << seed;
  }
}

TEST(Smooth, ReducesDetailOnBothMembers) {
  const Image clean = synth_clean_image(48, 48, 4);
  const Image noisy = add_gaussian_noise(clean, 30, 4);
  EXPECT_LT(laplacian_variance(smooth3x3(clean)), laplacian_variance(clean));
  EXPECT_LT(laplacian_variance(smooth3x3(noisy)), laplacian_variance(noisy));
}

TEST(Rotate, ZeroIsBitwiseIdentity) {
  const Image img = random_image(13, 11, 1);
  EXPECT_EQ(rotate(img, 0), img);
}

TEST(Rotate, FourQuarterTurnsAreIdentity) {
  for (std::size_t n : {8u, 9u}) {
    const Image img = random_image(n, n, n);
    Image r = img;
    for (int i = 0; i < 4; ++i) r = rotate_any(r, 90.0);
    EXPECT_EQ(r, img) << n;
  }
}

TEST(Rotate, QuarterTurnMovesPixelsAroundCenter) {
  const Image img = random_image(5, 5, 2);
  const Image r = rotate_any(img, 90.0);
  // Output (x, y) samples source (cx + (y - cy), cy - (x - cx)) with cx = cy = 2.
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(r.at(x, y, 1), img.at(y, 4 - x, 1));
  }
}

TEST(Rotate, KeepsExtentsAndRejectsOtherAngles) {
  const Image img = random_image(12, 7, 3);
  for (int a : kAugmentAngles) {
    const Image r = rotate(img, a);
    EXPECT_EQ(r.width, 12u);
    EXPECT_EQ(r.height, 7u);
  }
  EXPECT_THROW(rotate(img, 90), ContractError);
  EXPECT_THROW(rotate(img, 30), ContractError);
}

TEST(Rotate, ConstantImageStaysConstantAtEveryAngle) {
  const Image img(10, 10, 77);
  for (int a : kAugmentAngles) EXPECT_EQ(rotate(img, a), img);
}

TEST(Manifest, PaperCountsFor1500Bases) {
  std::vector<std::string> ids;
  for (int i = 0; i < 1500; ++i) ids.push_back(synth_id(static_cast<std::size_t>(i)));
  const auto m = build_manifest(ids, 0.8, 7);
  EXPECT_EQ(m.train.size(), 6000u);
  EXPECT_EQ(m.test.size(), 1500u);
}

TEST(Manifest, TenBasesAndTwoBases) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("b" + std::to_string(i));
  auto m = build_manifest(ids, 0.8, 1);
  EXPECT_EQ(m.train.size(), 40u);
  EXPECT_EQ(m.test.size(), 10u);
  m = build_manifest(std::vector<std::string>{"x", "y"}, 0.8, 1);
  EXPECT_EQ(m.train.size(), 5u);
  EXPECT_EQ(m.test.size(), 5u);
}

TEST(Manifest, NoLeakageAcrossSeedsAndEveryAngleOnce) {
  std::vector<std::string> ids;
  for (int i = 0; i < 60; ++i) ids.push_back("id" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = build_manifest(ids, 0.8, seed);
    std::set<std::string> train, test;
    std::map<std::string, std::multiset<int>> angles;
    for (const auto& e : m.train) train.insert(e.base_id), angles[e.base_id].insert(e.angle);
    for (const auto& e : m.test) test.insert(e.base_id), angles[e.base_id].insert(e.angle);
    for (const auto& id : train) ASSERT_FALSE(test.count(id)) << "seed " << seed << " leaks " << id;
    ASSERT_EQ(train.size() + test.size(), ids.size());
    for (const auto& [id, a] : angles) ASSERT_EQ(a, std::multiset<int>(kAugmentAngles.begin(), kAugmentAngles.end()));
  }
}

TEST(Manifest, DeterministicAndOrderIndependent) {
  std::vector<std::string> ids = {"c", "a", "d", "b", "e"};
  const auto m1 = build_manifest(ids, 0.8, 3);
  std::reverse(ids.begin(), ids.end());
  EXPECT_EQ(build_manifest(ids, 0.8, 3), m1);
  EXPECT_EQ(manifest_from_text(manifest_to_text(m1)), m1);
}

TEST(Manifest, EmptyAndDuplicateInputsAreContractErrors) {
  EXPECT_THROW(build_manifest(std::vector<std::string>{}, 0.8, 0), ContractError);
  EXPECT_THROW(build_manifest(std::vector<std::string>{"a", "a"}, 0.8, 0), ContractError);
}

TEST(Noise, SigmaZeroIsIdentity) {
  const Image img = random_image(8, 8, 5);
  EXPECT_EQ(add_gaussian_noise(img, 0.0, 9), img);
}

TEST(Noise, PreClampMomentsOverAMillionSamples) {
  const Image img(578, 577, 128);  // 1,000,818 samples
  const auto n = add_gaussian_noise_traced(img, 30.0, 11);
  double m = 0.0;
  for (double v : n.noise) m += v;
  m /= static_cast<double>(n.noise.size());
  double s = 0.0;
  for (double v : n.noise) s += (v - m) * (v - m);
  s = std::sqrt(s / static_cast<double>(n.noise.size() - 1));
  EXPECT_NEAR(m, 0.0, 0.2);
  EXPECT_NEAR(s, 30.0, 0.5);
}

TEST(Noise, MidGrayHistogramFollowsNormal) {
  const Image img(578, 577, 128);
  const Image out = add_gaussian_noise(img, 30.0, 12);
  std::vector<std::size_t> hist(256, 0);
  for (auto p : out.pixels) ++hist[p];
  // Output k collects N(128, 30) mass on [k - 0.5, k + 0.5); compare the
  // empirical CDF at each k with the normal CDF at k + 0.5.
  const double total = static_cast<double>(out.pixels.size());
  double cdf = 0.0, ks = 0.0;
  for (int k = 0; k < 256; ++k) {
    cdf += static_cast<double>(hist[static_cast<std::size_t>(k)]) / total;
    const double z = (k + 0.5 - 128.0) / 30.0;
    const double ref = k == 255 ? 1.0 : 0.5 * std::erfc(-z / std::sqrt(2.0));
    ks = std::max(ks, std::abs(cdf - ref));
  }
  EXPECT_LT(ks, 0.01);
}

TEST(Noise, DeterministicPerSeed) {
  const Image img = random_image(16, 16, 6);
  EXPECT_EQ(add_gaussian_noise(img, 30, 1), add_gaussian_noise(img, 30, 1));
  EXPECT_NE(add_gaussian_noise(img, 30, 1), add_gaussian_noise(img, 30, 2));
}

TEST(Rain, DensityZeroIsIdentity) {
  const Image img = random_image(16, 16, 7);
  RainParams p;
  p.density = 0.0;
  EXPECT_EQ(add_rain(img, p, 3), img);
}

TEST(Rain, OnlyBrightens) {
  const Image img = random_image(64, 64, 8);
  const Image out = add_rain(img, RainParams{}, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) ASSERT_GE(out.pixels[i], img.pixels[i]);
  EXPECT_NE(out, img);
}

TEST(Rain, StreakCountWithinPoissonBounds) {
  const Image img(64, 64, 0);
  const auto r = add_rain_traced(img, RainParams{}, 0);
  EXPECT_GE(r.streaks, 30u);
  EXPECT_LE(r.streaks, 52u);
}

TEST(Rain, MeanStreakCountMatchesDensity) {
  // Poisson(40.96): over 200 draws the mean has standard error 0.45.
  const Image img(64, 64, 0);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) total += static_cast<double>(add_rain_traced(img, RainParams{}, seed).streaks);
  EXPECT_NEAR(total / 200.0, 40.96, 3 * std::sqrt(40.96 / 200.0));
}

TEST(Rain, StreakFollowsSlant) {
  // A single long streak on black: the lit pixels' principal direction should
  // match the requested angle from vertical.
  RainParams p;
  p.density = 1.0 / (64.0 * 64.0);
  p.length = 30;
  p.angle = 30;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Image img(64, 64, 0);
    const auto r = add_rain_traced(img, p, seed);
    if (r.streaks != 1) continue;
    double sw = 0, mx = 0, my = 0;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) {
        const double w = r.image.at(x, y, 0);
        sw += w, mx += w * x, my += w * y;
      }
    mx /= sw, my /= sw;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) {
        const double w = r.image.at(x, y, 0), dx = x - mx, dy = y - my;
        sxx += w * dx * dx, syy += w * dy * dy, sxy += w * dx * dy;
      }
    if (mx < 16 || mx > 48 || my < 16 || my > 48) continue;  // streak clipped by the border
    const double theta = 0.5 * std::atan2(2 * sxy, syy - sxx) * 180.0 / std::numbers::pi;
    EXPECT_NEAR(theta, 30.0, 3.0);
    return;
  }
  FAIL() << "no unclipped single-streak sample found";
}

TEST(Scale, DownscaleBlocksAndShapes) {
  Image img(4, 2);
  const std::uint8_t vals[2] = {10, 200};
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = vals[x / 2];
  const Image d = downscale(img, 2);
  ASSERT_EQ(d.width, 2u);
  ASSERT_EQ(d.height, 1u);
  EXPECT_EQ(d.at(0, 0, 0), 10);
  EXPECT_EQ(d.at(1, 0, 2), 200);
  EXPECT_EQ(downscale(Image(48, 48), 2).width, 24u);
  EXPECT_EQ(downscale(Image(48, 48), 4).height, 12u);
  EXPECT_THROW(downscale(Image(5, 4), 2), DimensionError);
  EXPECT_THROW(downscale(Image(6, 6), 3), ContractError);
}

TEST(Scale, DownscaleOfUpscaledConstantIsIdentity) {
  const Image img(6, 4, 131);
  EXPECT_EQ(downscale(upscale_nearest(img, 2), 2), img);
  EXPECT_EQ(downscale(upscale_nearest(img, 4), 4), img);
}

TEST(Scale, BoxAverageMatchesDirectMean) {
  const Image img = random_image(8, 8, 9);
  const Image d = downscale(img, 4);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) {
      int s = 0;
      for (std::size_t dy = 0; dy < 4; ++dy)
        for (std::size_t dx = 0; dx < 4; ++dx) s += img.at(4 * x + dx, 4 * y + dy, 1);
      EXPECT_EQ(d.at(x, y, 1), std::lround(s / 16.0));
    }
}

TEST(Underwater, ZeroParametersAreIdentity) {
  const Image img = random_image(20, 20, 10);
  EXPECT_EQ(synth_underwater(img, UnderwaterParams{0, 0, 0}, 1), img);
}

TEST(Underwater, CastRaisesBlueOverRed) {
  const Image img = synth_clean_image(32, 32, 2);
  auto gap = [](const Image& im) {
    double r = 0, b = 0;
    for (std::size_t i = 0; i < im.width * im.height; ++i) r += im.pixels[i * 3], b += im.pixels[i * 3 + 2];
    return (b - r) / static_cast<double>(im.width * im.height);
  };
  for (double s : {0.1, 0.5, 1.0}) EXPECT_GT(gap(synth_underwater(img, {s, 0, 0}, 1)), gap(img)) << s;
}

TEST(Underwater, FidelityDropsWithCastStrength) {
  const Image img = synth_clean_image(48, 48, 3);
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {0.1, 0.3, 0.5}) {
    const double p = psnr_oracle(synth_underwater(img, {s, 1.0, 3.0}, 7), img);
    EXPECT_LT(p, prev) << s;
    prev = p;
  }
}

TEST(ImageIo, PngAndPpmRoundTrip) {
  const fs::path dir = scratch_dir("io");
  const Image img = random_image(7, 5, 11);
  write_image(img, dir / "a.png");
  write_image(img, dir / "a.ppm");
  EXPECT_EQ(read_image(dir / "a.png"), img);
  EXPECT_EQ(read_image(dir / "a.ppm"), img);
  write_image(img, dir / "b.png");
  EXPECT_EQ(read_bytes(dir / "a.png"), read_bytes(dir / "b.png"));
  EXPECT_THROW(write_image(img, dir / "a.jpg"), DataError);
  std::ofstream(dir / "bad.png") << "not a png";
  EXPECT_THROW(read_image(dir / "bad.png"), DataError);
  EXPECT_THROW(read_image(dir / "missing.ppm"), DataError);
}

TEST(Dataset, MissingCounterpartNamesTheId) {
  const fs::path dir = scratch_dir("missing");
  SynthOptions so;
  so.kind = SynthKind::Noise;
  so.count = 3;
  so.width = so.height = 8;
  write_synth_dataset(dir, so);
  fs::remove(dir / "clean" / "img00001.png");
  try {
    list_pairs(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("img00001"), std::string::npos) << e.what();
  }
}

TEST(Dataset, PrepareWritesFiveAnglesPerBaseAndIsDeterministic) {
  const fs::path raw = scratch_dir("prep_raw");
  SynthOptions so;
  so.count = 5;
  so.width = so.height = 16;
  write_synth_dataset(raw, so);
  const fs::path out1 = scratch_dir("prep_a"), out2 = scratch_dir("prep_b");
  PrepareOptions opt;
  opt.seed = 4;
  const auto s1 = prepare_dataset(raw, out1, opt);
  prepare_dataset(raw, out2, opt);
  EXPECT_EQ(s1.manifest.train.size(), 20u);
  EXPECT_EQ(s1.manifest.test.size(), 5u);
  EXPECT_EQ(s1.images_written, 50u);
  EXPECT_EQ(read_bytes(out1 / "manifest.tsv"), read_bytes(out2 / "manifest.tsv"));
  for (const auto& e : fs::directory_iterator(out1 / "clean")) {
    EXPECT_EQ(read_bytes(e.path()), read_bytes(out2 / "clean" / e.path().filename()));
  }
  const auto test = load_split(out1, s1.manifest, Split::Test);
  ASSERT_EQ(test.size(), 5u);
  for (const auto& p : test) EXPECT_TRUE(p.corrupted.same_extents(p.clean));
}

TEST(Dataset, PrepareSmoothsCleanOnlyByDefault) {
  const fs::path raw = scratch_dir("smooth_raw");
  SynthOptions so;
  so.count = 1;
  so.width = so.height = 16;
  const auto pairs = write_synth_dataset(raw, so);
  const fs::path out = scratch_dir("smooth_out");
  PrepareOptions opt;
  opt.angles = {0};
  prepare_dataset(raw, out, opt);
  EXPECT_EQ(read_image(out / "clean" / "img00000_r0.png"), smooth3x3(pairs[0].clean));
  EXPECT_EQ(read_image(out / "corrupted" / "img00000_r0.png"), pairs[0].corrupted);
}

TEST(Dataset, EqualizesHigherResolutionClean) {
  const fs::path dir = scratch_dir("equalize");
  SynthOptions so;
  so.kind = SynthKind::Downscale;
  so.count = 2;
  so.width = so.height = 16;
  write_synth_dataset(dir, so);
  const auto raw = load_pairs(dir, false);
  EXPECT_EQ(raw[0].clean.width, 16u);
  EXPECT_EQ(raw[0].corrupted.width, 8u);
  const auto eq = load_pairs(dir, true);
  EXPECT_EQ(eq[0].clean, downscale(raw[0].clean, 2));
}

TEST(Synth, CountsKindsAndDeterminism) {
  SynthOptions so;
  so.kind = SynthKind::Noise;
  so.count = 10;
  so.width = so.height = 12;
  const auto a = synth_pairs(so), b = synth_pairs(so);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].corrupted, b[i].corrupted);
    EXPECT_EQ(a[i].corrupted, add_gaussian_noise(a[i].clean, 30.0, image_seed(so.seed, a[i].base_id, 0)));
  }
  EXPECT_THROW(parse_synth_kind("fog"), ConfigError);
}
