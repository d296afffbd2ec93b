#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "medvsr/clip_io.hpp"

using namespace medvsr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("io_tmp") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

ImageU8 random_image(int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.rgb.resize(size_t(h * w * 3));
  for (auto& b : img.rgb) b = uint8_t(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("png write/read restores every byte") {
  TempDir dir("roundtrip");
  ImageU8 img = random_image(13, 21, 1);
  std::string path = (dir.path / "img.png").string();
  write_png(path, img);
  ImageU8 back = read_png(path);
  CHECK(back.h == 13);
  CHECK(back.w == 21);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("png reader rejects garbage and missing files") {
  TempDir dir("garbage");
  std::string path = (dir.path / "fake.png").string();
  std::ofstream(path, std::ios::binary) << "this is not a png";
  CHECK_THROWS_AS(read_png(path), contract_error);
  CHECK_THROWS_AS(read_png((dir.path / "absent.png").string()),
                  contract_error);
  ImageU8 bad;
  bad.h = 2;
  bad.w = 2;
  bad.rgb.resize(5);  // wrong payload size
  CHECK_THROWS_AS(write_png(path, bad), contract_error);
}

TEST_CASE("tensor conversion quantizes with clamping") {
  Tensor<double> t({3, 1, 2});
  t[0] = -0.5;         // clamps to 0
  t[1] = 1.5;          // clamps to 255
  t[2] = 128.0 / 255;  // exact level
  t[3] = 0.7;
  t[4] = 0.0;
  t[5] = 1.0;
  ImageU8 img = tensor_to_image(t);
  CHECK(img.rgb[0] == 0);                     // c0 x0
  CHECK(img.rgb[3] == 255);                   // c0 x1
  CHECK(img.rgb[1] == 128);                   // c1 x0
  CHECK(img.rgb[4] == uint8_t(std::lround(0.7 * 255)));
  CHECK(img.rgb[2] == 0);
  CHECK(img.rgb[5] == 255);

  // quantized values survive a conversion roundtrip bit for bit
  ImageU8 src = random_image(6, 5, 2);
  Tensor<double> ten = image_to_tensor<double>(src);
  ImageU8 again = tensor_to_image(ten);
  CHECK(again.rgb == src.rgb);
  CHECK_THROWS_AS(tensor_to_image(Tensor<double>({1, 4, 4}, 0.0)),
                  contract_error);
}

TEST_CASE("clip save/load roundtrip is pixel exact") {
  TempDir dir("clip");
  Clip<double> clip;
  for (int t = 0; t < 4; ++t)
    clip.push_back(image_to_tensor<double>(random_image(8, 10, 10 + t)));
  save_clip(dir.str(), clip);
  for (int t = 1; t <= 4; ++t)
    CHECK(fs::exists(dir.path / frame_name(t)));
  Clip<double> back = load_clip<double>(dir.str());
  REQUIRE(back.size() == 4);
  for (size_t t = 0; t < 4; ++t) CHECK(bitwise_equal(back[t], clip[t]));
}

TEST_CASE("clip loading names the first missing frame") {
  TempDir dir("gap");
  Clip<double> clip;
  for (int t = 0; t < 4; ++t)
    clip.push_back(image_to_tensor<double>(random_image(8, 8, 20 + t)));
  save_clip(dir.str(), clip);
  fs::remove(dir.path / frame_name(2));
  bool threw = false;
  try {
    load_clip<double>(dir.str());
  } catch (const contract_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("frame_00002.png") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("clip loading rejects empty or missing directories") {
  TempDir dir("empty");
  CHECK_THROWS_AS(load_clip<double>(dir.str()), contract_error);
  CHECK_THROWS_AS(load_clip<double>((dir.path / "nope").string()),
                  contract_error);
}

TEST_CASE("frame names parse strictly") {
  CHECK(frame_name(1) == "frame_00001.png");
  CHECK(frame_name(12345) == "frame_12345.png");
  CHECK(parse_frame_name("frame_00001.png") == 1);
  CHECK(parse_frame_name("frame_00321.png") == 321);
  CHECK(parse_frame_name("frame_1.png") == -1);    // missing zero padding
  CHECK(parse_frame_name("frame_00001.PNG") == -1);
  CHECK(parse_frame_name("shot_00001.png") == -1);
  CHECK(parse_frame_name("frame_00001.pngx") == -1);
}
