#pragma once

#include <cstdio>
#include <filesystem>
#include <set>

#include "medvsr/data.hpp"
#include "medvsr/png_io.hpp"

namespace medvsr {

// Frames live in a directory as frame_00001.png, frame_00002.png, ...
inline std::string frame_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05lld.png", (long long)index);
  return buf;
}

// Parses a frame index out of a basename, or -1 if it is not a frame file.
inline int64_t parse_frame_name(const std::string& name) {
  long long idx = -1;
  char tail = 0;
  if (std::sscanf(name.c_str(), "frame_%5lld.pn%c", &idx, &tail) == 2 &&
      tail == 'g' && name == frame_name(idx))
    return idx;
  return -1;
}

// Loads the contiguous run frame_00001..frame_N; a hole in the numbering is
// an error naming the first missing file.
template <class T>
Clip<T> load_clip(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), "clip: not a directory: " + dir);
  std::set<int64_t> indices;
  for (const auto& entry : fs::directory_iterator(dir)) {
    int64_t idx = parse_frame_name(entry.path().filename().string());
    if (idx >= 0) indices.insert(idx);
  }
  require(!indices.empty(), "clip: no frame_*.png files in " + dir);
  int64_t expect = 1;
  for (int64_t idx : indices) {
    require(idx == expect,
            "clip: missing " + frame_name(expect) + " in " + dir);
    ++expect;
  }
  Clip<T> clip;
  for (int64_t i = 1; i < expect; ++i)
    clip.push_back(
        image_to_tensor<T>(read_png((fs::path(dir) / frame_name(i)).string())));
  check_clip(clip, "load_clip");
  return clip;
}

template <class T>
void save_clip(const std::string& dir, const Clip<T>& clip) {
  namespace fs = std::filesystem;
  check_clip(clip, "save_clip");
  fs::create_directories(dir);
  for (size_t t = 0; t < clip.size(); ++t)
    write_png((fs::path(dir) / frame_name(int64_t(t) + 1)).string(),
              tensor_to_image(clip[t]));
}

}  // namespace medvsr
