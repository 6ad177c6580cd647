#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "msdgr/config.hpp"
#include "msdgr/pipeline.hpp"
#include "msdgr/synthetic.hpp"

namespace msdgr {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msdgr_pipeline_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Two orientations at one wavelength keeps extraction cheap.
std::string small_bank(const fs::path& dir) {
  const auto path = (dir / "bank.cfg").string();
  std::ofstream out(path);
  write_gabor_config(out, {{0.0, 4.0, 2.0, 1.0, 0.0}, {std::numbers::pi / 2, 4.0, 2.0, 1.0, 0.0}});
  return path;
}

TEST(Config, DefaultsAndTypedAccess) {
  const Config c;
  EXPECT_EQ(c.get("pipeline"), "gabor");
  EXPECT_EQ(c.get_int("gabor.patch"), 9);
  EXPECT_EQ(c.get_real("train.lr"), 0.001);
  EXPECT_EQ(c.get_int("train.lr_step"), 10);
  EXPECT_EQ(c.get_real("train.lr_decay"), 0.5);
  EXPECT_EQ(c.get_real("train.weight_decay"), 0.0001);
  EXPECT_EQ(c.get_int("train.batch"), 64);
  EXPECT_EQ(c.get_int("train.epochs"), 40);
  EXPECT_EQ(c.get_int("match.adj_sign"), -1);
  EXPECT_EQ(c.seed(), 0u);
}

TEST(Config, ParseWithCommentsAndRoundTrip) {
  std::istringstream in("# experiment\n[ignored = no]\n");
  EXPECT_THROW(Config::parse(in), ParameterError);
  std::istringstream ok("seed = 7  # master\n\nmatch.mode=both\n  occlusion.fraction = 0.25\n");
  const Config c = Config::parse(ok);
  EXPECT_EQ(c.seed(), 7u);
  EXPECT_EQ(c.get("match.mode"), "both");
  EXPECT_EQ(c.get_real("occlusion.fraction"), 0.25);
  std::stringstream text;
  c.write(text);
  const Config d = Config::parse(text);
  for (const auto& k : config_schema()) EXPECT_EQ(c.get(k.name), d.get(k.name)) << k.name;
}

TEST(Config, ErrorsNameTheLine) {
  auto error_of = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      Config::parse(in, "x.cfg");
    } catch (const Error& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(error_of("seed = 1\nbogus.key = 3\n").find("x.cfg:2"), std::string::npos);
  EXPECT_NE(error_of("match.mode = fuzzy\n").find("static|dynamic|both"), std::string::npos);
  EXPECT_NE(error_of("\n\ntrain.lr = fast\n").find("x.cfg:3"), std::string::npos);
  EXPECT_NE(error_of("gabor.patch\n").find("expected key = value"), std::string::npos);
}

TEST(Config, OverridesAndEnvironment) {
  Config c;
  c.set_assignment("gabor.nodes=12");
  EXPECT_EQ(c.get_int("gabor.nodes"), 12);
  EXPECT_THROW(c.set_assignment("gabor.nodes"), ParameterError);
  ::setenv("MSDGR_SEED", "42", 1);
  c.apply_env();
  EXPECT_EQ(c.seed(), 42u);
  ::setenv("MSDGR_SEED", "abc", 1);
  EXPECT_THROW(c.apply_env(), ParameterError);
  ::unsetenv("MSDGR_SEED");
  c.set("seed", "-1");
  EXPECT_THROW(c.seed(), ParameterError);
}

TEST(Manifest, ResolvesRelativePathsAndValidates) {
  const auto dir = scratch_dir("manifest");
  write_pgm((dir / "a.pgm").string(), Image(4, 4));
  {
    std::ofstream m(dir / "m.csv");
    m << "path,label,split\na.pgm,alice,train\n" << (dir / "a.pgm").string() << ",bob,test\n";
  }
  const auto entries = read_manifest((dir / "m.csv").string());
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(fs::path(entries[0].path), dir / "a.pgm");
  EXPECT_EQ(entries[1].label, "bob");
  EXPECT_EQ(entries[1].split, "test");

  auto write = [&](const std::string& text) {
    std::ofstream(dir / "bad.csv") << text;
    return (dir / "bad.csv").string();
  };
  EXPECT_THROW(read_manifest(write("path,label\nmissing.pgm,x\n")), DatasetError);
  EXPECT_THROW(read_manifest(write("path,label\na.pgm,\n")), DatasetError);
  EXPECT_THROW(read_manifest(write("file,who\na.pgm,x\n")), DatasetError);
  EXPECT_THROW(read_manifest(write("path,label\na.pgm,x,extra\n")), DatasetError);
  EXPECT_THROW(read_manifest((dir / "none.csv").string()), DatasetError);
}

TEST(Synthetic, DeterministicAndLabelled) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.samples = 2;
  spec.height = 16;
  spec.width = 24;
  const auto a = synthetic_dataset(spec), b = synthetic_dataset(spec);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].image, b[k].image);
  EXPECT_EQ(a[4].label, "class002");
  EXPECT_EQ(a[4].sample_index, 0);
  EXPECT_NE(a[0].image, a[1].image);
  for (double v : a[0].image.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  spec.seed = 1;
  EXPECT_NE(synthetic_dataset(spec)[0].image, a[0].image);
  spec.shared = spec.components + 1;
  EXPECT_THROW(synthetic_dataset(spec), ParameterError);
}

TEST(Synthetic, SamplesResembleTheirOwnClass) {
  SyntheticSpec spec;
  spec.classes = 6;
  spec.samples = 2;
  spec.height = 32;
  spec.width = 32;
  const auto ds = synthetic_dataset(spec);
  auto corr = [](const Image& x, const Image& y) {
    const Vector a = Eigen::Map<const Vector>(x.pixels.data(), static_cast<Eigen::Index>(x.size())).array() - 0.5;
    const Vector b = Eigen::Map<const Vector>(y.pixels.data(), static_cast<Eigen::Index>(y.size())).array() - 0.5;
    return a.dot(b) / (a.norm() * b.norm());
  };
  for (int c = 0; c < spec.classes; ++c) {
    const double own = corr(ds[2 * c].image, ds[2 * c + 1].image);
    for (int d = 0; d < spec.classes; ++d) {
      if (d == c) continue;
      EXPECT_GT(own, corr(ds[2 * c].image, ds[2 * d + 1].image));
    }
  }
}

TEST(Pipeline, GaborRepresentationShape) {
  const auto dir = scratch_dir("shape");
  Config c;
  c.set("gabor.bank", small_bank(dir));
  c.set("gabor.patch", "5");
  c.set("gabor.nodes", "6");
  const Pipeline p(c);
  SyntheticSpec spec;
  spec.height = 24;
  spec.width = 32;
  const auto r = p.represent(synthetic_image(spec, 0, 0));
  ASSERT_EQ(r.graphs.size(), 1u);
  EXPECT_EQ(r.graphs[0].node_count(), 6);
  EXPECT_EQ(r.graphs[0].dim(), 2 * 3 * 5 * 5);
  EXPECT_EQ(r.graphs[0].radius, 5.0);
  EXPECT_EQ(r.global.size(), 0);
}

TEST(Pipeline, ConfigurationErrors) {
  Config c;
  c.set("pipeline", "cnn-weights");
  EXPECT_THROW(Pipeline{c}, MissingWeightsError);
  c.set("cnn.weights", "/nonexistent/w.msdg");
  EXPECT_THROW(Pipeline{c}, MissingWeightsError);
  Config g;
  g.set("localizer", "sln");
  EXPECT_THROW(Pipeline{g}, ParameterError);
  g.set("localizer", "grid");
  g.set("gabor.patch", "4");
  EXPECT_THROW(Pipeline{g}, ParameterError);
  g.set("gabor.patch", "3");
  g.set("localizer", "external");
  EXPECT_THROW(Pipeline{g}, ParameterError);
}

TEST(Records, RoundTripAndByteIdenticalRewrites) {
  const auto dir = scratch_dir("records");
  Config c;
  c.set("gabor.bank", small_bank(dir));
  c.set("gabor.patch", "3");
  c.set("gabor.nodes", "5");
  const Pipeline p(c);
  SyntheticSpec spec;
  spec.height = 20;
  spec.width = 20;
  std::vector<Sample> samples;
  for (int k = 0; k < 3; ++k) samples.push_back({synthetic_label(k) + "\xc3\xa9", p.represent(synthetic_image(spec, k, 0))});
  samples[1].repr.global = Vector::LinSpaced(4, -1.0, 1.0);
  const std::uint64_t seed = 0x123456789abcdefULL;
  write_records((dir / "a.rec").string(), samples, seed);
  write_records((dir / "b.rec").string(), samples, seed);
  EXPECT_EQ(read_bytes(dir / "a.rec"), read_bytes(dir / "b.rec"));

  std::uint64_t back_seed = 0;
  const auto back = read_records((dir / "a.rec").string(), &back_seed);
  EXPECT_EQ(back_seed, seed);
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    EXPECT_EQ(back[k].label, samples[k].label);
    EXPECT_EQ(back[k].repr, quantized(samples[k].repr));
  }
  write_records((dir / "c.rec").string(), back, seed);
  EXPECT_EQ(read_bytes(dir / "a.rec"), read_bytes(dir / "c.rec"));
}

TEST(Resize, IdentityAndCorners) {
  Image img(3, 4);
  for (std::size_t k = 0; k < img.pixels.size(); ++k) img.pixels[k] = 0.1 * static_cast<double>(k);
  EXPECT_EQ(resize_bilinear(img, 3, 4), img);
  const Image big = resize_bilinear(img, 5, 7);
  EXPECT_DOUBLE_EQ(big.at(0, 0), img.at(0, 0));
  EXPECT_DOUBLE_EQ(big.at(4, 6), img.at(2, 3));
  EXPECT_DOUBLE_EQ(big.at(2, 3), 0.5 * (img.at(1, 1) + img.at(1, 2)));
}

}  // namespace
}  // namespace msdgr
