#include <algorithm>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "svid/dataset.hpp"
#include "svid/image_io.hpp"

using namespace svid;
using svid::test::TempDir;

namespace {

std::vector<std::filesystem::path> names(int n) {
  std::vector<std::filesystem::path> out;
  for (int i = 0; i < n; ++i) out.emplace_back("img" + std::to_string(i) + ".pgm");
  return out;
}

}  // namespace

TEST_CASE("crop of an exactly sized image is the identity") {
  const auto img = shapes_dataset(1, 16, 1).front();
  Rng rng(1);
  CHECK(random_crop(img, 16, rng) == img);
}

TEST_CASE("crop positions are uniform over corners") {
  // A (size+1)^2 image has exactly four valid corners.
  Rng rng(2);
  std::array<int, 4> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto at = sample_crop_position(9, 9, 8, rng);
    REQUIRE(at.top >= 0);
    REQUIRE(at.top <= 1);
    REQUIRE(at.left >= 0);
    REQUIRE(at.left <= 1);
    ++counts[at.top * 2 + at.left];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  // Upper 0.001 quantile of chi-square with 3 degrees of freedom.
  CHECK(chi2 < 16.266);
}

TEST_CASE("crops are deterministic per stream and reject small images") {
  const auto img = shapes_dataset(1, 32, 2).front();
  auto a = make_stream(3, Stream::sample, 5), b = make_stream(3, Stream::sample, 5);
  CHECK(random_crop(img, 8, a) == random_crop(img, 8, b));
  CHECK_THROWS_AS(random_crop(img, 33, a), std::invalid_argument);

  ImageBuffer ramp(4, 3, 1);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) ramp.at(0, y, x) = y * 10 + x;
  const auto c = crop(ramp, {1, 2}, 2);
  CHECK(c.pixels == std::vector<double>{12, 13, 22, 23});
}

TEST_CASE("split sizes follow the floor rule") {
  const auto s = split_files(names(10), 0, 0.8);
  CHECK(s.train.size() == 8);
  CHECK(s.test.size() == 2);
  CHECK(split_files(names(10), 0, 0.85).train.size() == 8);
  CHECK(split_files(names(10), 0, 1.0).test.empty());
  CHECK(split_files(names(10), 0, 0.0).train.empty());
}

TEST_CASE("splits are deterministic, disjoint and sorted") {
  const auto a = split_files(names(50), 7, 0.6);
  auto shuffled = names(50);
  std::reverse(shuffled.begin(), shuffled.end());
  const auto b = split_files(shuffled, 7, 0.6);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  CHECK(std::is_sorted(a.test.begin(), a.test.end()));
  std::set<std::filesystem::path> all(a.train.begin(), a.train.end());
  for (const auto& p : a.test) CHECK(all.insert(p).second);
  CHECK(all.size() == 50);
  CHECK(split_files(names(50), 8, 0.6).train != a.train);
}

TEST_CASE("dataset directory listing") {
  TempDir dir("dataset");
  const auto imgs = shapes_dataset(5, 8, 0);
  for (std::size_t i = 0; i < imgs.size(); ++i) save_image(imgs[i], dir / ("s" + std::to_string(i) + ".pgm"));
  write_file_atomic(dir / "notes.txt", std::vector<unsigned char>{'x'});
  CHECK(list_images(dir.path()).size() == 5);
  const auto split = build_dataset(dir.path(), 1, 0.6);
  CHECK(split.train.size() == 3);
  CHECK(load_images(split.test).size() == 2);
  CHECK_THROWS(build_dataset(dir / "missing", 1, 0.5));
}

TEST_CASE("synthetic shapes are reproducible and in range") {
  const auto a = shapes_dataset(3, 64, 4), b = shapes_dataset(3, 64, 4);
  CHECK(a == b);
  CHECK(a[0] != a[1]);
  for (const auto& img : a) {
    CHECK(img.width == 64);
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
    CHECK(*hi - *lo > 0.2);
  }
}
