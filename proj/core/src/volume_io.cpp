/*
 * Copyright 2026 The ct3d Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ct3d/volume_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include <png.h>

#include "byte_io.hpp"
#include "ct3d/augment.hpp"
#include "ct3d/error.hpp"
#include "ct3d/file_io.hpp"
#include "ct3d/resample.hpp"

namespace ct3d {

namespace fs = std::filesystem;

namespace {

constexpr char kVoxMagic[] = "VOX1";
constexpr std::uint8_t kDtypeF32 = 0;

}  // namespace

std::vector<std::uint8_t> encode_vox(const Tensor& volume) {
  if (volume.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError("VOX1: rank too large");
  }
  detail::ByteWriter w;
  w.raw(kVoxMagic);
  w.u8(kDtypeF32);
  w.u8(static_cast<std::uint8_t>(volume.rank()));
  for (auto d : volume.dims()) w.u64(d);
  for (float v : volume.data()) w.f32(v);
  return std::move(w.bytes());
}

Tensor decode_vox(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "VOX1");
  if (r.raw(4) != kVoxMagic) r.fail("bad magic");
  const std::uint8_t dtype = r.u8();
  if (dtype != kDtypeF32) r.fail("unsupported dtype code " + std::to_string(dtype));
  const std::uint8_t rank = r.u8();
  if (rank == 0) r.fail("rank 0");
  Shape dims(rank);
  std::size_t n = 1;
  for (auto& d : dims) {
    d = r.u64();
    if (d == 0) r.fail("zero extent");
    if (n > std::numeric_limits<std::size_t>::max() / d) r.fail("dims overflow");
    n *= d;
  }
  if (n > r.remaining() / 4 || r.remaining() != 4 * n) r.fail("payload length mismatch");
  Tensor t(dims);
  r.f32s(t.data().data(), n);
  return t;
}

Tensor read_vox(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_vox(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_vox(const fs::path& path, const Tensor& volume) {
  write_file_atomic(path, encode_vox(volume));
}

// ---------------------------------------------------------------------------
// Slice images

namespace {

class PgmParser {
 public:
  PgmParser(const std::vector<std::uint8_t>& b, const fs::path& p) : b_(b), path_(p) {}

  SliceImage parse() {
    if (b_.size() < 2 || b_[0] != 'P' || (b_[1] != '2' && b_[1] != '5')) fail("not a PGM");
    const bool ascii = b_[1] == '2';
    pos_ = 2;
    SliceImage img;
    img.cols = header_number();
    img.rows = header_number();
    const std::size_t maxval = header_number();
    if (img.cols == 0 || img.rows == 0 || maxval == 0 || maxval > 65535) fail("bad header");
    img.bit_depth = maxval < 256 ? 8 : 16;
    const std::size_t n = img.rows * img.cols;
    img.pixels.resize(n);
    if (ascii) {
      for (auto& px : img.pixels) px = static_cast<std::uint16_t>(checked(header_number(), maxval));
    } else {
      if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail("bad header");
      ++pos_;
      const std::size_t bpp = img.bit_depth == 8 ? 1 : 2;
      if (b_.size() - pos_ < n * bpp) fail("truncated raster");
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t v = b_[pos_ + i * bpp];
        if (bpp == 2) v = (v << 8) | b_[pos_ + i * bpp + 1];
        img.pixels[i] = static_cast<std::uint16_t>(checked(v, maxval));
      }
    }
    return img;
  }

 private:
  std::size_t checked(std::size_t v, std::size_t maxval) {
    if (v > maxval) fail("sample exceeds maxval");
    return v;
  }

  std::size_t header_number() {
    for (;;) {
      while (pos_ < b_.size() && std::isspace(b_[pos_])) ++pos_;
      if (pos_ < b_.size() && b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) fail("bad header");
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
      if (v > (1u << 30)) fail("number too large");
    }
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(path_.string() + ": " + msg);
  }

  const std::vector<std::uint8_t>& b_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

SliceImage read_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_COLOR) {
    png_image_free(&image);
    throw FormatError(path.string() + ": not a grayscale image");
  }
  SliceImage img;
  img.rows = image.height;
  img.cols = image.width;
  img.bit_depth = (image.format & PNG_FORMAT_FLAG_LINEAR) ? 16 : 8;
  image.format = img.bit_depth == 16 ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  img.pixels.resize(img.rows * img.cols);
  bool ok;
  if (img.bit_depth == 16) {
    ok = png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr);
  } else {
    std::vector<std::uint8_t> buf(img.pixels.size());
    ok = png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr);
    std::copy(buf.begin(), buf.end(), img.pixels.begin());
  }
  if (!ok) throw FormatError(path.string() + ": " + image.message);
  return img;
}

}  // namespace

SliceImage read_slice_image(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) {
    return read_png(bytes, path);
  }
  return PgmParser(bytes, path).parse();
}

namespace {

void check_image(const SliceImage& image) {
  if (image.rows == 0 || image.cols == 0 || image.pixels.size() != image.rows * image.cols ||
      (image.bit_depth != 8 && image.bit_depth != 16)) {
    throw ParameterError("malformed slice image");
  }
}

}  // namespace

void write_pgm(const fs::path& path, const SliceImage& image) {
  check_image(image);
  const std::string header = "P5\n" + std::to_string(image.cols) + " " +
                             std::to_string(image.rows) + "\n" +
                             (image.bit_depth == 8 ? "255" : "65535") + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (auto px : image.pixels) {
    if (image.bit_depth == 16) out.push_back(static_cast<std::uint8_t>(px >> 8));
    out.push_back(static_cast<std::uint8_t>(px & 0xff));
  }
  write_file_atomic(path, out);
}

void write_png(const fs::path& path, const SliceImage& image) {
  check_image(image);
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.cols);
  png.height = static_cast<png_uint_32>(image.rows);
  png_alloc_size_t size = 0;
  std::vector<std::uint8_t> buf8;
  const void* data = image.pixels.data();
  if (image.bit_depth == 16) {
    png.format = PNG_FORMAT_LINEAR_Y;
  } else {
    png.format = PNG_FORMAT_GRAY;
    buf8.assign(image.pixels.begin(), image.pixels.end());
    data = buf8.data();
  }
  if (!png_image_write_get_memory_size(png, size, 0, data, 0, nullptr)) {
    throw IoError(path.string() + ": " + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, data, 0, nullptr)) {
    throw IoError(path.string() + ": " + png.message);
  }
  out.resize(size);
  write_file_atomic(path, out);
}

float slice_intensity(std::uint16_t value, int bit_depth) {
  if (bit_depth == 8) return static_cast<float>(value / 255.0);
  const double hu = static_cast<double>(value) - 1024.0;
  const double lo = -1000.0, hi = 400.0;
  return static_cast<float>((std::clamp(hu, lo, hi) - lo) / (hi - lo));
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool is_slice_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".pgm" || ext == ".pnm" || ext == ".png";
}

}  // namespace

IngestResult ingest_case(const fs::path& input) {
  std::error_code ec;
  if (!fs::exists(input, ec)) throw IoError("no such file or directory '" + input.string() + "'");
  IngestResult out;
  if (!fs::is_directory(input, ec)) {
    out.volume = read_vox(input);
    return out;
  }

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && !name.empty() && name[0] != '.' && is_slice_file(e.path())) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });

  std::vector<SliceImage> images;
  images.reserve(files.size());
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> votes;
  for (const auto& f : files) {
    images.push_back(read_slice_image(f));
    ++votes[{images.back().rows, images.back().cols}];
  }
  std::pair<std::size_t, std::size_t> majority{0, 0};
  std::size_t best = 0;
  for (const auto& [res, count] : votes) {
    const bool larger = res.first * res.second > majority.first * majority.second ||
                        (res.first * res.second == majority.first * majority.second &&
                         res.first > majority.first);
    if (count > best || (count == best && larger)) {
      majority = res;
      best = count;
    }
  }
  if (best < 2) {
    throw ShapeError("'" + input.string() + "' has " + std::to_string(best) +
                     " consistent slice(s); at least 2 are required");
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (std::pair{images[i].rows, images[i].cols} == majority) {
      keep.push_back(i);
    } else {
      out.discarded.push_back(i);
    }
  }
  if (!out.discarded.empty()) {
    std::ostringstream msg;
    msg << "discarded " << out.discarded.size() << " slice(s) not matching the majority resolution "
        << majority.first << "x" << majority.second << ": indices";
    for (auto i : out.discarded) msg << ' ' << i;
    out.warnings.push_back(msg.str());
  }

  const std::size_t rows = majority.first, cols = majority.second, nz = keep.size();
  out.volume = Tensor({rows, cols, nz});
  for (std::size_t z = 0; z < nz; ++z) {
    const SliceImage& img = images[keep[z]];
    out.slice_files.push_back(files[keep[z]].filename().string());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        out.volume.at(r, c, z) = slice_intensity(img.pixels[r * cols + c], img.bit_depth);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Precompute cache

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

fs::path default_cache_dir() {
  const char* env = std::getenv("CT3D_CACHE_DIR");
  return (env && *env) ? fs::path(env) : fs::path(".ct3d-cache");
}

PrecomputeResult precompute(const Tensor& volume, std::size_t pre_size, std::size_t crop_size,
                            const fs::path& cache_dir) {
  if (volume.rank() != 3) {
    throw ShapeError("precompute expects an (X, Y, Z) volume, got " + to_string(volume.dims()));
  }
  if (pre_size == 0 || crop_size == 0) throw ParameterError("precompute sizes must be positive");
  detail::ByteWriter sizes;
  sizes.u64(pre_size);
  sizes.u64(crop_size);
  const std::uint64_t h = fnv1a64(sizes.bytes(), fnv1a64(encode_vox(volume)));
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));

  PrecomputeResult r;
  r.key = hex;
  const fs::path dir = cache_dir / r.key;
  r.pre_path = dir / ("r" + std::to_string(pre_size) + ".vox");
  r.base_path = dir / ("r" + std::to_string(crop_size) + ".vox");
  std::error_code ec;
  if (fs::exists(r.pre_path, ec) && fs::exists(r.base_path, ec)) {
    r.cache_hit = true;
    return r;
  }
  write_vox(r.pre_path, spline_resample_volume(volume, {pre_size, pre_size, pre_size}));
  write_vox(r.base_path, spline_resample_volume(volume, {crop_size, crop_size, crop_size}));
  return r;
}

}  // namespace ct3d
