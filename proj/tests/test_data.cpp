#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "adnet/config.hpp"
#include "adnet/data.hpp"
#include "adnet/image_io.hpp"
#include "adnet/rng.hpp"

using namespace adnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

io::ImageU8 gray_ramp(int h, int w) {
  io::ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x, 0) = static_cast<std::uint8_t>((y * w + x) % 256);
  return img;
}

io::ImageU8 rgb_fill(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  io::ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

}  // namespace

TEST_CASE("resize_nearest: index oracle on a 4 -> 2 downscale") {
  Tensor img({4, 4, 1});
  for (int i = 0; i < 16; ++i) img.data[i] = i;
  Tensor out = data::resize_nearest(img, 2, 2);
  // src index = floor((i + 0.5) * 4 / 2) = {1, 3}
  CHECK(out.data[0] == 4 * 1 + 1);
  CHECK(out.data[1] == 4 * 1 + 3);
  CHECK(out.data[2] == 4 * 3 + 1);
  CHECK(out.data[3] == 4 * 3 + 3);
}

TEST_CASE("resize_nearest: upscale replicates, same-size is the identity") {
  Tensor img({2, 2, 1}, {1, 2, 3, 4});
  Tensor up = data::resize_nearest(img, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(up.data[static_cast<std::size_t>(y) * 4 + x] ==
            img.data[static_cast<std::size_t>(y / 2) * 2 + x / 2]);
  CHECK(data::resize_nearest(img, 2, 2).data == img.data);
  // binary stays binary through arbitrary resizes
  Tensor bin({3, 3, 1}, {0, 1, 0, 1, 0, 1, 0, 1, 0});
  for (double v : data::resize_nearest(bin, 7, 5).data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("resize_nearest rejects bad arguments") {
  Tensor img({2, 2, 1}, {1, 2, 3, 4});
  CHECK_THROWS_AS(data::resize_nearest(img, 0, 2), ParameterError);
  CHECK_THROWS_AS(data::resize_nearest(Tensor({2, 2}, {1, 2, 3, 4}), 2, 2), ContractViolation);
}

TEST_CASE("synthetic generator: deterministic per seed, distinct across seeds") {
  data::SyntheticSpec spec;
  spec.count = 4;
  spec.canvas = 32;
  spec.seed = 99;
  auto a = data::generate_synthetic(spec);
  auto b = data::generate_synthetic(spec);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.data == b[i].image.data);
    CHECK(a[i].mask.data == b[i].mask.data);
    CHECK(a[i].id == b[i].id);
  }
  spec.seed = 100;
  auto c = data::generate_synthetic(spec);
  CHECK(a[0].image.data != c[0].image.data);
}

TEST_CASE("synthetic generator: masks are binary, non-trivial, recoverable by threshold") {
  data::SyntheticSpec spec;
  spec.count = 6;
  spec.canvas = 48;
  spec.noise = 0.01;
  spec.seed = 7;
  for (const auto& s : data::generate_synthetic(spec)) {
    double pos = 0;
    for (double v : s.mask.data) {
      CHECK((v == 0.0 || v == 1.0));
      pos += v;
    }
    const double frac = pos / static_cast<double>(s.mask.size());
    CHECK(frac > 0.02);
    CHECK(frac < 0.8);
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    // low noise: lesion and background gray levels separate almost perfectly
    double in_sum = 0, out_sum = 0, in_n = 0, out_n = 0;
    for (std::size_t i = 0; i < s.mask.size(); ++i) {
      const double g = (s.image.data[3 * i] + s.image.data[3 * i + 1] + s.image.data[3 * i + 2]) / 3;
      if (s.mask.data[i] > 0.5) { in_sum += g; ++in_n; }
      else { out_sum += g; ++out_n; }
    }
    CHECK(std::abs(in_sum / in_n - out_sum / out_n) > 0.3);
  }
}

TEST_CASE("synthetic generator rejects degenerate specs") {
  data::SyntheticSpec spec;
  spec.canvas = 4;
  CHECK_THROWS_AS(data::generate_synthetic(spec), ParameterError);
  spec = data::SyntheticSpec{};
  spec.axis_max_frac = 0.05;  // below axis_min_frac
  CHECK_THROWS_AS(data::generate_synthetic(spec), ParameterError);
}

TEST_CASE("png round trip preserves pixels for gray and rgb") {
  TempDir dir("adnet_test_png");
  const auto gpath = (dir.path / "g.png").string();
  io::ImageU8 g = gray_ramp(9, 7);
  io::write_png(gpath, g);
  io::ImageU8 g2 = io::read_png(gpath);
  CHECK(g2.width == 7);
  CHECK(g2.height == 9);
  CHECK(g2.channels == 1);
  CHECK(g2.pixels == g.pixels);

  const auto cpath = (dir.path / "c.png").string();
  io::ImageU8 c = rgb_fill(4, 5, 10, 200, 77);
  io::write_png(cpath, c);
  io::ImageU8 c2 = io::read_image(cpath);  // sniffed as PNG
  CHECK(c2.channels == 3);
  CHECK(c2.pixels == c.pixels);
}

TEST_CASE("read_png on a missing or corrupt file raises DataError") {
  CHECK_THROWS_AS(io::read_png("/nonexistent/adnet.png"), DataError);
  TempDir dir("adnet_test_badpng");
  const auto path = (dir.path / "bad.png").string();
  std::ofstream(path) << "this is not a png";
  CHECK_THROWS_AS(io::read_image(path), DataError);
}

TEST_CASE("load_dataset pairs by stem, sorts by id, resizes") {
  TempDir dir("adnet_test_ds");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  for (const char* stem : {"b_scan", "a_scan"}) {
    io::write_png((dir.path / "images" / (std::string(stem) + ".png")).string(),
                  rgb_fill(10, 12, 100, 120, 140));
    io::ImageU8 m = gray_ramp(10, 12);  // values 0..119 binarize at 128
    io::write_png((dir.path / "masks" / (std::string(stem) + ".png")).string(), m);
  }
  auto ds = data::load_dataset((dir.path / "images").string(), (dir.path / "masks").string(), 8);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].id == "a_scan");
  CHECK(ds[1].id == "b_scan");
  CHECK(ds[0].image.shape == std::vector<int>{8, 8, 3});
  CHECK(ds[0].mask.shape == std::vector<int>{8, 8, 1});
  for (double v : ds[0].image.data) CHECK(v == doctest::Approx(100.0 / 255.0).epsilon(0.3));
  for (double v : ds[0].mask.data) CHECK(v == 0.0);  // all source values < 128
}

TEST_CASE("load_dataset reports orphans on either side") {
  TempDir dir("adnet_test_orphan");
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  io::write_png((dir.path / "images" / "only_image.png").string(), rgb_fill(4, 4, 1, 2, 3));
  CHECK_THROWS_AS(
      data::load_dataset((dir.path / "images").string(), (dir.path / "masks").string(), 4),
      DataError);
  io::write_png((dir.path / "masks" / "only_mask.png").string(), gray_ramp(4, 4));
  CHECK_THROWS_AS(
      data::load_dataset((dir.path / "images").string(), (dir.path / "masks").string(), 4),
      DataError);
  CHECK_THROWS_AS(data::load_dataset("/nonexistent/images", "/nonexistent/masks", 4), DataError);
}

TEST_CASE("make_batch stacks samples in index order") {
  data::SyntheticSpec spec;
  spec.count = 3;
  spec.canvas = 16;
  auto ds = data::generate_synthetic(spec);
  auto [images, masks] = data::make_batch(ds, {2, 0});
  CHECK(images.shape == std::vector<int>{2, 16, 16, 3});
  CHECK(masks.shape == std::vector<int>{2, 16, 16, 1});
  CHECK(images.at4(0, 3, 3, 0) == ds[2].image.data[(3 * 16 + 3) * 3]);
  CHECK(images.at4(1, 3, 3, 0) == ds[0].image.data[(3 * 16 + 3) * 3]);
  CHECK_THROWS_AS(data::make_batch(ds, {}), ContractViolation);
}

TEST_CASE("config: parse, defaults, comments") {
  auto cfg = config::parse_config(
      "# training setup\n"
      "input_size = 64\n"
      "seed=9\n"
      "gamma = 1.5  # focal exponent\n"
      "loss_variant=B\n"
      "\n");
  CHECK(cfg.model.input_size == 64);
  CHECK(cfg.synthetic.canvas == 64);
  CHECK(cfg.model.seed == 9);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.loss.gamma == 1.5);
  CHECK(cfg.loss.variant == losses::Variant::B);
  // untouched keys keep defaults
  CHECK(cfg.train.batch_size == 8);
  CHECK(cfg.loss.alpha == 0.7);
}

TEST_CASE("config: unknown keys and malformed lines rejected with line numbers") {
  try {
    config::parse_config("input_size=64\nbogus_key=1\n", "test.cfg");
    FAIL("expected ParameterError");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("test.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus_key") != std::string::npos);
  }
  CHECK_THROWS_AS(config::parse_config("no equals sign here\n"), ParameterError);
}

TEST_CASE("config: gamma outside [1,3] rejected at parse time") {
  CHECK_THROWS_AS(config::parse_config("gamma=5\n"), ParameterError);
  CHECK_THROWS_AS(config::parse_config("gamma=0.5\n"), ParameterError);
  CHECK_NOTHROW(config::parse_config("gamma=3\n"));
}

TEST_CASE("config: serialize -> parse round trip is exact") {
  auto cfg = config::parse_config(
      "input_size=64\nwidth_multiplier=0.3333333333333333\ninitial_lr=0.00025\nseed=123\n"
      "alpha=0.65\nsynthetic_count=12\nguided=false\n");
  auto echo = config::serialize_config(cfg);
  auto cfg2 = config::parse_config(echo);
  CHECK(config::serialize_config(cfg2) == echo);
  CHECK(cfg2.model.width_multiplier == cfg.model.width_multiplier);
  CHECK(cfg2.train.initial_lr == cfg.train.initial_lr);
  CHECK(cfg2.model.guided == false);
}

TEST_CASE("load_config on a missing file raises DataError") {
  CHECK_THROWS_AS(config::load_config("/nonexistent/adnet.cfg"), DataError);
}
