#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "frvi/video.hpp"

namespace fs = std::filesystem;

namespace frvi {

static_assert(std::endian::native == std::endian::little,
              "raster I/O assumes a little-endian host");

namespace {

std::size_t element_bytes(RasterType type) {
  return type == RasterType::Float32 ? 4 : 8;
}

const char* type_name(RasterType type) {
  return type == RasterType::Float32 ? "f32" : "f64";
}

RasterType parse_type(const std::string& s) {
  if (s == "f32") return RasterType::Float32;
  if (s == "f64") return RasterType::Float64;
  throw IoError("unsupported raster type '" + s + "'");
}

std::string frame_name(const char* prefix, int index) {
  std::ostringstream os;
  os << prefix << "_" << std::setw(5) << std::setfill('0') << index << ".f32";
  return os.str();
}

// Flat "key value" text; later keys override earlier ones.
std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key, value;
    if (!(ls >> key)) continue;
    std::getline(ls >> std::ws, value);
    kv[key] = value;
  }
  return kv;
}

int require_int(const std::map<std::string, std::string>& kv,
                const std::string& key, const std::string& where) {
  auto it = kv.find(key);
  if (it == kv.end()) throw IoError(where + ": missing '" + key + "'");
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": bad value for '" + key + "'");
  }
}

}  // namespace

void write_raw(const std::string& path, const Tensor& tensor, RasterType type) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  const auto n = static_cast<std::size_t>(tensor.size());
  if (type == RasterType::Float32) {
    std::vector<float> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(tensor.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), n * sizeof(float));
  } else {
    out.write(reinterpret_cast<const char*>(tensor.data()), n * sizeof(double));
  }
  if (!out) throw IoError("short write to " + path);
}

Tensor read_raw(const std::string& path, const Shape& shape, RasterType type) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const auto n = static_cast<std::size_t>(shape.size());
  const std::size_t bytes = n * element_bytes(type);
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::size_t>(in.tellg());
  if (actual != bytes) {
    throw IoError(path + ": expected " + std::to_string(bytes) +
                  " bytes for shape " + to_string(shape) + ", found " +
                  std::to_string(actual));
  }
  in.seekg(0);
  Tensor t(shape);
  if (type == RasterType::Float32) {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    for (std::size_t i = 0; i < n; ++i) t.data()[i] = buf[i];
  } else {
    in.read(reinterpret_cast<char*>(t.data()), bytes);
  }
  if (!in) throw IoError("short read from " + path);
  return t;
}

void write_raster(const std::string& path, const Tensor& tensor,
                  RasterType type, std::optional<std::array<double, 2>> range) {
  write_raw(path, tensor, type);
  std::ofstream hdr(path + ".hdr", std::ios::trunc);
  if (!hdr) throw IoError("cannot write " + path + ".hdr");
  hdr << "channels " << tensor.channels() << "\n"
      << "height " << tensor.height() << "\n"
      << "width " << tensor.width() << "\n"
      << "type " << type_name(type) << "\n";
  if (range) {
    hdr << std::setprecision(17) << "range_min " << (*range)[0] << "\n"
        << "range_max " << (*range)[1] << "\n";
  }
}

Tensor read_raster(const std::string& path, RasterHeader* header) {
  const auto kv = read_key_values(path + ".hdr");
  RasterHeader h;
  h.shape = {require_int(kv, "channels", path), require_int(kv, "height", path),
             require_int(kv, "width", path)};
  if (h.shape.channels <= 0 || h.shape.height <= 0 || h.shape.width <= 0) {
    throw IoError(path + ": non-positive raster dimensions");
  }
  auto type = kv.find("type");
  h.type = type == kv.end() ? RasterType::Float32 : parse_type(type->second);
  auto lo = kv.find("range_min"), hi = kv.find("range_max");
  if (lo != kv.end() && hi != kv.end()) {
    h.range = std::array<double, 2>{std::stod(lo->second), std::stod(hi->second)};
  }
  Tensor t = read_raw(path, h.shape, h.type);
  if (header) *header = h;
  return t;
}

void write_video(const VideoSequence& seq, const std::string& dir) {
  if (seq.frames.empty()) throw InputError("write_video: empty sequence");
  if (seq.masks.size() != seq.frames.size()) {
    throw ShapeError("write_video: masks not aligned with frames");
  }
  const Shape s = seq.frame_shape();
  if (s.channels != kFrameChannels) {
    throw ShapeError("write_video: unsupported channel count " +
                     std::to_string(s.channels));
  }
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream m(root / "manifest.txt", std::ios::trunc);
    if (!m) throw IoError("cannot write manifest in " + dir);
    m << "format frvi-video\n"
      << "version 1\n"
      << "frames " << seq.frames.size() << "\n"
      << "height " << s.height << "\n"
      << "width " << s.width << "\n"
      << "channels " << s.channels << "\n"
      << "masks 1\n"
      << "gt_frames " << (seq.gt_frames ? 1 : 0) << "\n"
      << "flows " << (seq.gt_flows ? 1 : 0) << "\n";
  }
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    require_shape(seq.frames[t].shape(), s, "write_video frame");
    require_shape(seq.masks[t].shape(), Shape{1, s.height, s.width},
                  "write_video mask");
    write_raw((root / frame_name("frame", t)).string(), seq.frames[t],
              RasterType::Float32);
    write_raw((root / frame_name("mask", t)).string(), seq.masks[t],
              RasterType::Float32);
    if (seq.gt_frames) {
      write_raw((root / frame_name("gt", t)).string(), seq.gt_frames->at(t),
                RasterType::Float32);
    }
  }
  if (seq.gt_flows) {
    for (std::size_t t = 0; t < seq.gt_flows->size(); ++t) {
      write_raw((root / frame_name("flow", t)).string(), seq.gt_flows->at(t),
                RasterType::Float32);
    }
  }
}

VideoSequence read_video(const std::string& dir) {
  const fs::path root(dir);
  const auto kv = read_key_values(root / "manifest.txt");
  const std::string where = (root / "manifest.txt").string();
  auto format = kv.find("format");
  if (format == kv.end() || format->second != "frvi-video") {
    throw IoError(where + ": not a frvi-video manifest");
  }
  if (require_int(kv, "version", where) != 1) {
    throw IoError(where + ": unsupported version");
  }
  const int T = require_int(kv, "frames", where);
  const int H = require_int(kv, "height", where);
  const int W = require_int(kv, "width", where);
  const int C = require_int(kv, "channels", where);
  if (T < 1 || H < 1 || W < 1) throw IoError(where + ": bad dimensions");
  if (C != kFrameChannels) {
    throw IoError(where + ": unsupported channel count " + std::to_string(C));
  }
  const bool has_gt = require_int(kv, "gt_frames", where) != 0;
  const bool has_flows = require_int(kv, "flows", where) != 0;
  VideoSequence seq;
  std::vector<Frame> gts;
  for (int t = 0; t < T; ++t) {
    seq.frames.push_back(read_raw((root / frame_name("frame", t)).string(),
                                  {C, H, W}, RasterType::Float32));
    seq.masks.push_back(read_raw((root / frame_name("mask", t)).string(),
                                 {1, H, W}, RasterType::Float32));
    if (has_gt) {
      gts.push_back(read_raw((root / frame_name("gt", t)).string(), {C, H, W},
                             RasterType::Float32));
    }
  }
  if (has_gt) seq.gt_frames = std::move(gts);
  if (has_flows) {
    std::vector<FlowField> flows;
    for (int t = 0; t + 1 < T; ++t) {
      flows.push_back(read_raw((root / frame_name("flow", t)).string(),
                               {2, H, W}, RasterType::Float32));
    }
    seq.gt_flows = std::move(flows);
  }
  return seq;
}

namespace {

struct Netpbm {
  int width = 0, height = 0, channels = 0;
  std::vector<unsigned char> pixels;
};

Netpbm read_netpbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  in >> magic;
  Netpbm img;
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    throw IoError(path + ": unsupported image format '" + magic + "'");
  }
  auto next_int = [&]() {
    int v = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> v)) throw IoError(path + ": corrupt header");
    return v;
  };
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval != 255 || img.width <= 0 || img.height <= 0) {
    throw IoError(path + ": only 8-bit images are supported");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height *
                    img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), img.pixels.size());
  if (!in) throw IoError(path + ": truncated pixel data");
  return img;
}

}  // namespace

Frame read_ppm(const std::string& path) {
  const Netpbm img = read_netpbm(path);
  if (img.channels != 3) throw IoError(path + ": expected a colour PPM");
  Frame f(3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        f(c, y, x) = img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0;
  return f;
}

Mask read_pgm_mask(const std::string& path) {
  const Netpbm img = read_netpbm(path);
  if (img.channels != 1) throw IoError(path + ": expected a grey PGM");
  Mask m(1, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m(0, y, x) = img.pixels[static_cast<std::size_t>(y) * img.width + x] ? 1.0 : 0.0;
  return m;
}

void write_ppm(const std::string& path, const Frame& frame) {
  if (frame.channels() != 3) throw ShapeError("write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << frame.width() << " " << frame.height() << "\n255\n";
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(frame(c, y, x), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
}

VideoSequence import_image_sequence(const std::string& frames_dir,
                                    const std::string& masks_dir) {
  auto list = [](const std::string& dir, const std::string& ext) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ext)
        files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  VideoSequence seq;
  for (const auto& p : list(frames_dir, ".ppm")) seq.frames.push_back(read_ppm(p.string()));
  if (seq.frames.empty()) throw IoError("no .ppm frames in " + frames_dir);
  const Shape s = seq.frame_shape();
  if (!masks_dir.empty()) {
    for (const auto& p : list(masks_dir, ".pgm")) seq.masks.push_back(read_pgm_mask(p.string()));
    if (seq.masks.size() != seq.frames.size()) {
      throw ShapeError("mask count does not match frame count");
    }
    for (const Mask& m : seq.masks) validate_mask(m, s);
  } else {
    seq.masks.assign(seq.frames.size(), Mask(1, s.height, s.width));
  }
  for (const Frame& f : seq.frames) require_shape(f.shape(), s, "imported frame");
  return seq;
}

}  // namespace frvi
