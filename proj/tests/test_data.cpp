#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <jpeglib.h>

#include "ganilla/data.hpp"
#include "ganilla/synth.hpp"
#include "support/tempdir.hpp"

namespace ganilla {
namespace {

using testing::TempDir;

RawImage constant_image(std::size_t h, std::size_t w, std::uint8_t v) { return RawImage(h, w, v); }

void make_tree(const fs::path& root, std::size_t a, std::size_t b, std::size_t test) {
  for (auto [sub, n] : {std::pair{"trainA", a}, std::pair{"trainB", b}, std::pair{"testA", test}}) {
    fs::create_directories(root / sub);
    for (std::size_t i = 0; i < n; ++i) write_png(root / sub / ("img" + std::to_string(i) + ".png"), constant_image(4, 4, 10));
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Data, LoadsToyTree) {
  TempDir dir;
  make_tree(dir.path(), 4, 4, 2);
  auto d = load_unpaired_dataset(dir.path());
  EXPECT_EQ(d.source_train.size(), 4u);
  EXPECT_EQ(d.target_train.size(), 4u);
  EXPECT_EQ(d.source_test.size(), 2u);
  EXPECT_TRUE(std::is_sorted(d.source_train.begin(), d.source_train.end()));
  EXPECT_EQ(d.target_style_id, dir.path().filename().string());
}

TEST(Data, MissingTrainBIsNamed) {
  TempDir dir;
  make_tree(dir.path(), 2, 1, 0);
  fs::remove_all(dir / "trainB");
  try {
    load_unpaired_dataset(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("trainB"), std::string::npos);
  }
}

TEST(Data, EmptyTrainDomainRejected) {
  TempDir dir;
  make_tree(dir.path(), 0, 2, 0);
  EXPECT_THROW(load_unpaired_dataset(dir.path()), DataError);
}

TEST(Data, ListingMatchesDirectoryWalk) {
  TempDir dir;
  make_tree(dir.path(), 3, 1, 0);
  fs::create_directories(dir / "trainA" / "nested");
  write_png(dir / "trainA" / "nested" / "deep.png", constant_image(2, 2, 0));
  std::ofstream(dir / "trainA" / "notes.txt") << "x";
  write_png(dir / "trainA" / "UPPER.PNG", constant_image(2, 2, 0));
  // Referencing the same file through a non-normalized path must not duplicate it.
  auto listed = list_images(dir / "trainA" / "." );
  std::set<std::string> oracle;
  for (const auto& e : fs::directory_iterator(dir / "trainA")) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && (name.ends_with(".png") || name.ends_with(".PNG"))) oracle.insert(name);
  }
  std::vector<std::string> names;
  for (const auto& p : listed) names.push_back(p.filename().string());
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()), oracle);
  EXPECT_EQ(names.size(), oracle.size());
}

TEST(Data, LabelsMustReferenceKnownImages) {
  TempDir dir;
  make_tree(dir.path(), 2, 2, 1);
  write_labels_csv(dir / "labels.csv", {{"trainA/img0.png", 3}, {"testA/img0.png", 1}});
  auto d = load_unpaired_dataset(dir.path());
  EXPECT_EQ(d.source_labels.at("testA/img0.png"), 1);
  write_labels_csv(dir / "labels.csv", {{"trainA/missing.png", 3}});
  EXPECT_THROW(load_unpaired_dataset(dir.path()), DataError);
  std::ofstream(dir / "labels.csv") << "file,id\nx,1\n";
  EXPECT_THROW(load_unpaired_dataset(dir.path()), DataError);
}

TEST(Preprocess, RangeEndpoints) {
  for (auto [v, want] : {std::pair<std::uint8_t, float>{255, 1.0f}, {0, -1.0f}}) {
    auto t = preprocess(constant_image(37, 53, v), 32);
    ASSERT_EQ(t.shape(), (Shape{1, 3, 32, 32}));
    for (float x : t.values()) ASSERT_EQ(x, want);
  }
  EXPECT_THROW(preprocess(RawImage{}, 32), DataError);
}

TEST(Preprocess, HalvingMatchesBlockAverageOracle) {
  // With half-pixel centres an exact 2x reduction samples the middle of each
  // 2x2 block, i.e. the block mean.
  RawImage img(512, 512);
  for (std::size_t y = 0; y < 512; ++y)
    for (std::size_t x = 0; x < 512; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>(x / 2);
      img.at(y, x, 1) = static_cast<std::uint8_t>(y / 2);
      img.at(y, x, 2) = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
    }
  auto t = preprocess(img, 256);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 256; ++y)
      for (std::size_t x = 0; x < 256; ++x) {
        const double mean = (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) + img.at(2 * y + 1, 2 * x, c) +
                             img.at(2 * y + 1, 2 * x + 1, c)) / 4.0;
        ASSERT_NEAR(t.at(0, c, y, x), mean / 127.5 - 1.0, 1e-6) << c << ' ' << y << ' ' << x;
      }
}

TEST(Preprocess, MonotoneInIntensity) {
  Engine rng(3);
  RawImage img(16, 16);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  auto t = preprocess(img, 16);  // identity geometry
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x + 1 < 16; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const bool lt = img.at(y, x, c) < img.at(y, x + 1, c);
        EXPECT_EQ(lt, t.at(0, c, y, x) < t.at(0, c, y, x + 1));
        EXPECT_GE(t.at(0, c, y, x), -1.0f);
        EXPECT_LE(t.at(0, c, y, x), 1.0f);
      }
  EXPECT_EQ(to_raw_image(t).pixels, img.pixels);
}

TEST(Preprocess, MinusOneMapsToBlack) {
  auto img = to_raw_image(Tensor<float>({1, 3, 4, 4}, -1.0f));
  for (auto p : img.pixels) EXPECT_EQ(p, 0);
}

TEST(RandomPatch, OffsetsStayInRangeAndAreUniform) {
  Engine rng(99);
  Tensor<float> img({1, 3, 256, 256});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i % 1013);
  std::vector<std::size_t> row_hist(157), col_hist(157);
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) {
    auto p = random_patch(img, 100, rng);
    ASSERT_LE(p.top, 156u);
    ASSERT_LE(p.left, 156u);
    ++row_hist[p.top];
    ++col_hist[p.left];
    if (i < 20) {
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 100; y += 7)
          for (std::size_t x = 0; x < 100; x += 11)
            ASSERT_EQ(p.data.at(0, c, y, x), img.at(0, c, p.top + y, p.left + x));
    }
  }
  const double pr = 1.0 / 157, mean = draws * pr, sigma = std::sqrt(draws * pr * (1 - pr));
  for (std::size_t k = 0; k < 157; ++k) {
    EXPECT_LT(std::abs(row_hist[k] - mean), 5 * sigma);
    EXPECT_LT(std::abs(col_hist[k] - mean), 5 * sigma);
  }
}

TEST(RandomPatch, DegenerateAndInvalid) {
  Engine rng(1);
  Tensor<float> img({1, 3, 32, 32}, 0.5f);
  auto p = random_patch(img, 32, rng);
  EXPECT_EQ(p.top, 0u);
  EXPECT_EQ(p.left, 0u);
  EXPECT_EQ(p.data, img);
  EXPECT_THROW(random_patch(img, 33, rng), ShapeError);
}

TEST(ImageIo, PngRoundTripAndJpegRead) {
  TempDir dir;
  RawImage img(5, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  write_png(dir / "a.png", img);
  auto back = read_image(dir / "a.png");
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, img.pixels);

  // Encode a flat grey JPEG with libjpeg directly.
  const fs::path jp = dir / "b.jpg";
  FILE* f = std::fopen(jp.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  jpeg_compress_struct c{};
  jpeg_error_mgr err{};
  c.err = jpeg_std_error(&err);
  jpeg_create_compress(&c);
  jpeg_stdio_dest(&c, f);
  c.image_width = 8;
  c.image_height = 8;
  c.input_components = 3;
  c.in_color_space = JCS_RGB;
  jpeg_set_defaults(&c);
  jpeg_set_quality(&c, 100, TRUE);
  jpeg_start_compress(&c, TRUE);
  std::vector<unsigned char> row(24, 128);
  while (c.next_scanline < 8) {
    JSAMPROW r = row.data();
    jpeg_write_scanlines(&c, &r, 1);
  }
  jpeg_finish_compress(&c);
  jpeg_destroy_compress(&c);
  std::fclose(f);
  auto j = read_image(jp);
  EXPECT_EQ(j.width, 8u);
  for (auto p : j.pixels) EXPECT_NEAR(p, 128, 2);

  std::ofstream(dir / "c.png") << "not an image";
  EXPECT_THROW(read_image(dir / "c.png"), ImageIoError);
  EXPECT_THROW(read_image(dir / "missing.png"), ImageIoError);
}

TEST(Synth, CountsDeterminismAndLabelRoundTrip) {
  TempDir a, b;
  synth_toy_domains(7, 8, a.path());
  synth_toy_domains(7, 8, b.path());
  auto d = load_unpaired_dataset(a.path());
  EXPECT_EQ(d.source_train.size(), 8u);
  EXPECT_EQ(d.target_train.size(), 8u);
  EXPECT_EQ(d.source_labels.size(), 8u);
  EXPECT_EQ(d.target_style_id, "S0");
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(d.source_labels.at(d.relative(d.source_train[i])), static_cast<int>(i % 10));
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = e.path().lexically_relative(a.path());
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
  }
  TempDir c;
  synth_toy_domains(8, 8, c.path());
  EXPECT_NE(slurp(a / "trainA/nat_0000.png"), slurp(c / "trainA/nat_0000.png"));
}

TEST(Synth, TestSplitAndStyleSets) {
  TempDir dir;
  SynthOptions opt;
  opt.n_test = 3;
  opt.image_size = 32;
  synth_toy_domains(1, 4, dir.path(), opt);
  auto d = load_unpaired_dataset(dir.path());
  EXPECT_EQ(d.source_test.size(), 3u);
  EXPECT_EQ(d.source_labels.size(), 7u);
  synth_style_sets(2, 3, 2, dir / "styles", 32);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(list_images(dir / "styles" / ("S" + std::to_string(s))).size(), 2u);
  for (const auto& p : d.source_train) {
    auto t = load_preprocessed(p, 32);
    EXPECT_TRUE(t.all_finite());
    for (float v : t.values()) ASSERT_LE(std::abs(v), 1.0f);
  }
}

TEST(Synth, UnwritablePathRejected) {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(synth_toy_domains(1, 2, dir / "file" / "sub"), DataError);
}

}  // namespace
}  // namespace ganilla
