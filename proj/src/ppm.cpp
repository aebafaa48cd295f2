#include "mos/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace mos {

void write_ppm(const Image &img, const std::string &path) {
  if (img.channels != 3) throw ShapeError("ppm: only 3-channel images supported");
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file.is_open()) throw IoError("ppm: cannot write file: " + path);
  file << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f) * 255.0f;
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v));
      }
    }
    file.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!file.good()) throw IoError("ppm: write failed: " + path);
}

Image read_ppm(const std::string &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file.is_open()) throw DataError("ppm: cannot open file: " + path);
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  file >> magic >> width >> height >> maxval;
  if (magic != "P6" || maxval != 255 || width < 1 || height < 1) throw DataError("ppm: unsupported header in " + path);
  file.get(); // single whitespace after maxval
  Image img(height, width, 3);
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 3);
  if (!file.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError("ppm: truncated pixel data in " + path);
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  return img;
}

} // namespace mos
