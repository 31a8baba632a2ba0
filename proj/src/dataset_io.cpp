#include "dgcount/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dgcount::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string stem_for(int sample_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", sample_id);
  return buf;
}

}  // namespace

void write_pgm(const Tensor& image, const fs::path& path) {
  if (image.ndim() != 3 || image.dim(0) != 1) throw ShapeError("write_pgm: expected [1 x H x W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << "P5\n" << w << ' ' << h << "\n65535\n";
  for (double v : image.data()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};
    os.write(bytes, 2);
  }
}

Tensor read_pgm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw ValidationError(path.string() + ": unsupported graymap header");
  }
  is.get();
  const bool wide = maxval > 255;
  std::vector<double> data(h * w);
  for (auto& v : data) {
    unsigned q = static_cast<unsigned char>(is.get());
    if (wide) q = (q << 8) | static_cast<unsigned char>(is.get());
    v = static_cast<double>(q) / static_cast<double>(maxval);
  }
  if (!is) throw ValidationError(path.string() + ": truncated pixel data");
  return Tensor::from_data({1, h, w}, std::move(data));
}

void export_split(const std::vector<CrowdSample>& samples, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : samples) {
    const auto stem = stem_for(s.sample_id);
    write_pgm(s.image, dir / (stem + ".pgm"));
    std::ofstream pts(dir / (stem + ".txt"));
    pts.precision(17);
    for (const auto& p : s.points) pts << p.row << ' ' << p.col << '\n';
    json meta{{"sample_id", s.sample_id},
              {"style_id", s.style_id},
              {"subdomain_label", s.subdomain_label},
              {"kernel_size", kDefaultKernelSize},
              {"sigma", kDefaultSigma}};
    std::ofstream(dir / (stem + ".json")) << meta.dump(2) << '\n';
  }
}

std::vector<CrowdSample> import_split(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir.string());
  std::vector<fs::path> sidecars;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") sidecars.push_back(entry.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::vector<CrowdSample> out;
  for (const auto& meta_path : sidecars) {
    json meta;
    try {
      meta = json::parse(std::ifstream(meta_path));
    } catch (const json::exception& e) {
      throw ValidationError(meta_path.string() + ": " + e.what());
    }
    auto stem = meta_path;
    stem.replace_extension();
    CrowdSample s;
    s.sample_id = meta.at("sample_id").get<int>();
    s.style_id = meta.at("style_id").get<int>();
    s.subdomain_label = meta.value("subdomain_label", -1);
    s.image = read_pgm(fs::path(stem.string() + ".pgm"));
    std::ifstream pts(fs::path(stem.string() + ".txt"));
    if (!pts) throw ValidationError("missing point list for " + stem.string());
    std::string line;
    while (std::getline(pts, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      Point p;
      if (!(ls >> p.row >> p.col)) throw ValidationError("bad point line in " + stem.string());
      s.points.push_back(p);
    }
    s.density = density_map(s.points, s.height(), s.width(),
                            meta.value("kernel_size", kDefaultKernelSize),
                            meta.value("sigma", kDefaultSigma));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dgcount::synth
