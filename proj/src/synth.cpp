#include "graphau/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "graphau/errors.hpp"
#include "graphau/rng.hpp"

namespace graphau {

namespace {
// Scattered default cell assignment on the 6x6 grid, one cell per
// rendered AU in ascending code order.
const std::vector<int> kDefaultCells = {0, 3, 7, 10, 14, 17, 21, 24, 28, 31, 35};
}  // namespace

void SynthConfig::finalize() {
  if (rendered_aus.empty()) {
    std::set<int> s(modeled.codes().begin(), modeled.codes().end());
    s.insert({7, 10, 43});
    rendered_aus.assign(s.begin(), s.end());
  }
  std::sort(rendered_aus.begin(), rendered_aus.end());
  for (int c : rendered_aus)
    if (!is_recognized_au(c)) throw InvalidConfigError("unrecognized AU" + std::to_string(c));
  for (int c : {4, 6, 7, 9, 10, 43})
    if (!std::binary_search(rendered_aus.begin(), rendered_aus.end(), c))
      throw InvalidConfigError("rendered AU set must include the PSPI constituents");
  for (int c : modeled.codes())
    if (!std::binary_search(rendered_aus.begin(), rendered_aus.end(), c))
      throw InvalidConfigError("rendered AU set must include every modeled AU");

  if (grid < 1 || side < grid || side % grid != 0)
    throw InvalidConfigError("side must be a positive multiple of grid");
  const int cell_px = side / grid;
  if (2 * margin >= cell_px) throw InvalidConfigError("margin leaves no blob area");

  if (au_cells.empty()) {
    if (rendered_aus.size() > kDefaultCells.size() ||
        static_cast<int>(rendered_aus.size()) > grid * grid)
      throw InvalidConfigError("too many rendered AUs for the default cell layout");
    for (std::size_t i = 0; i < rendered_aus.size(); ++i)
      au_cells[rendered_aus[i]] = kDefaultCells[i];
  }
  std::set<int> used;
  for (int c : rendered_aus) {
    auto it = au_cells.find(c);
    if (it == au_cells.end())
      throw InvalidConfigError("no cell assigned to AU" + std::to_string(c));
    if (it->second < 0 || it->second >= grid * grid)
      throw InvalidConfigError("cell index out of range for AU" + std::to_string(c));
    if (!used.insert(it->second).second)
      throw InvalidConfigError("cell collision at index " + std::to_string(it->second));
  }

  double mix = mixture[0] + mixture[1] + mixture[2];
  if (std::abs(mix - 1.0) > 1e-9) throw InvalidConfigError("mixture must sum to 1");
  for (double p : mixture)
    if (p < 0.0) throw InvalidConfigError("mixture proportions must be nonnegative");
  if (noise < 0.0) throw InvalidConfigError("noise amplitude must be nonnegative");
  if (frames < 0) throw InvalidConfigError("frame count must be nonnegative");
  if (subjects < 1) throw InvalidConfigError("need at least one subject");
}

std::string encode_render_uri(const RenderSpec& spec) {
  char noise_hex[64];
  std::snprintf(noise_hex, sizeof noise_hex, "%a", static_cast<double>(spec.noise));
  std::ostringstream out;
  out << "synthetic:v1;side=" << spec.side << ";grid=" << spec.grid
      << ";margin=" << spec.margin << ";noise=" << noise_hex << ";seed=" << spec.seed
      << ";aus=";
  for (std::size_t i = 0; i < spec.active.size(); ++i) {
    if (i) out << ",";
    out << spec.active[i][0] << ":" << spec.active[i][1] << ":" << spec.active[i][2];
  }
  return out.str();
}

RenderSpec decode_render_uri(const std::string& uri) {
  const std::string prefix = "synthetic:v1;";
  if (uri.rfind(prefix, 0) != 0) throw InvalidConfigError("not a synthetic:v1 URI: " + uri);
  RenderSpec spec;
  std::istringstream in(uri.substr(prefix.size()));
  std::string field;
  while (std::getline(in, field, ';')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) throw InvalidConfigError("bad URI field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    try {
      if (key == "side") spec.side = std::stoi(val);
      else if (key == "grid") spec.grid = std::stoi(val);
      else if (key == "margin") spec.margin = std::stoi(val);
      else if (key == "noise") spec.noise = std::strtof(val.c_str(), nullptr);
      else if (key == "seed") spec.seed = std::stoull(val);
      else if (key == "aus") {
        if (val.empty()) continue;
        std::istringstream list(val);
        std::string item;
        while (std::getline(list, item, ',')) {
          std::array<int, 3> a{};
          if (std::sscanf(item.c_str(), "%d:%d:%d", &a[0], &a[1], &a[2]) != 3)
            throw InvalidConfigError("bad AU entry '" + item + "'");
          spec.active.push_back(a);
        }
      } else {
        throw InvalidConfigError("unknown URI key '" + key + "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw InvalidConfigError(std::string("bad URI value: ") + e.what());
    }
  }
  return spec;
}

Image render(const RenderSpec& spec) {
  const int side = spec.side;
  if (side <= 0 || spec.grid <= 0 || side % spec.grid != 0)
    throw InvalidConfigError("invalid render geometry");
  const int cell_px = side / spec.grid;
  Image img = Image::Zero(static_cast<Eigen::Index>(side) * side, 3);
  for (const auto& [code, intensity, cell] : spec.active) {
    (void)code;
    if (intensity <= 0) continue;
    const float b = static_cast<float>(intensity) / 5.0f;
    const int r0 = (cell / spec.grid) * cell_px + spec.margin;
    const int c0 = (cell % spec.grid) * cell_px + spec.margin;
    const int r1 = (cell / spec.grid + 1) * cell_px - spec.margin;
    const int c1 = (cell % spec.grid + 1) * cell_px - spec.margin;
    for (int y = r0; y < r1; ++y)
      for (int x = c0; x < c1; ++x)
        img.row(static_cast<Eigen::Index>(y) * side + x).array() += b;
  }
  if (spec.noise > 0.0f) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<float> n(0.0f, spec.noise);
    for (Eigen::Index p = 0; p < img.rows(); ++p)
      for (int c = 0; c < 3; ++c) img(p, c) += n(rng);
  }
  img = img.cwiseMax(0.0f).cwiseMin(1.0f);
  return img;
}

Image load_image(const std::string& image_ref) {
  if (image_ref.rfind("synthetic:", 0) == 0) return render(decode_render_uri(image_ref));
  return read_ppm(image_ref);
}

namespace {

// Splits a target PSPI into AU4 + max(AU6,AU7) + max(AU9,AU10) + AU43.
AUIntensityMap decompose_pspi(int target, std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  AUIntensityMap aus;
  int au43 = 0;
  if (target >= 1 && std::uniform_real_distribution<double>(0, 1)(rng) < 0.4) au43 = 1;
  int rest = target - au43;
  const int au4 = pick(std::max(0, rest - 10), std::min(5, rest));
  rest -= au4;
  const int m1 = pick(std::max(0, rest - 5), std::min(5, rest));
  const int m2 = rest - m1;
  auto fill_pair = [&](int hi_code, int lo_code, int m) {
    const int minor = (m > 0) ? pick(0, m) : 0;
    if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) {
      aus[hi_code] = m;
      aus[lo_code] = minor;
    } else {
      aus[lo_code] = m;
      aus[hi_code] = minor;
    }
  };
  aus[4] = au4;
  aus[43] = au43;
  fill_pair(6, 7, m1);
  fill_pair(9, 10, m2);
  return aus;
}

}  // namespace

DatasetManifest synth_generate(const SynthConfig& config) {
  SynthConfig cfg = config;
  cfg.finalize();

  DatasetManifest m;
  m.modeled_aus = cfg.modeled;
  m.provenance["source"] = "synthetic";
  m.provenance["seed"] = std::to_string(cfg.seed);

  std::mt19937_64 rng(fnv1a64("synth", cfg.seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::set<int> constituents = {4, 6, 7, 9, 10, 43};

  for (int i = 0; i < cfg.frames; ++i) {
    char fid[16], sid[16];
    std::snprintf(fid, sizeof fid, "f%05d", i);
    std::snprintf(sid, sizeof sid, "s%03d",
                  static_cast<int>(static_cast<long long>(i) * cfg.subjects / cfg.frames));

    // category by mixture, then a PSPI consistent with it
    const double roll = u(rng);
    int target;
    if (roll < cfg.mixture[0]) {
      target = 0;
    } else if (roll < cfg.mixture[0] + cfg.mixture[1]) {
      target = std::uniform_int_distribution<int>(1, 4)(rng);
    } else {
      target = std::uniform_int_distribution<int>(5, 10)(rng);
    }

    AUIntensityMap aus = decompose_pspi(target, rng);
    std::vector<int> extras;
    for (int code : cfg.rendered_aus)
      if (!constituents.count(code)) extras.push_back(code);
    for (int code : extras)
      aus[code] = (u(rng) < 0.45) ? std::uniform_int_distribution<int>(1, 5)(rng) : 0;
    if (target == 0 && !extras.empty()) {
      bool any = false;
      for (int code : extras) any = any || aus[code] > 0;
      if (!any) {
        const int code = extras[std::uniform_int_distribution<std::size_t>(0, extras.size() - 1)(rng)];
        aus[code] = std::uniform_int_distribution<int>(1, 5)(rng);
      }
    }

    RenderSpec spec;
    spec.side = cfg.side;
    spec.grid = cfg.grid;
    spec.margin = cfg.margin;
    spec.noise = static_cast<float>(cfg.noise);
    spec.seed = fnv1a64(fid, cfg.seed);
    for (int code : cfg.rendered_aus)
      if (aus.count(code) && aus[code] > 0)
        spec.active.push_back({code, aus[code], cfg.au_cells.at(code)});

    m.records.push_back(make_record(fid, sid, encode_render_uri(spec), aus, cfg.modeled));
  }
  m.normalize();
  return m;
}

void write_ppm(const std::string& path, const Image& image, int side) {
  if (image.rows() != static_cast<Eigen::Index>(side) * side || image.cols() != 3)
    throw ShapeMismatchError("image is not side*side x 3");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << side << " " << side << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(image.rows()) * 3);
  for (Eigen::Index p = 0; p < image.rows(); ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image(p, c), 0.0f, 1.0f);
      buf[static_cast<std::size_t>(p) * 3 + c] =
          static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h != w || maxval != 255)
    throw IoError("unsupported PPM in " + path);
  in.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError("truncated PPM " + path);
  Image img(static_cast<Eigen::Index>(w) * h, 3);
  for (Eigen::Index p = 0; p < img.rows(); ++p)
    for (int c = 0; c < 3; ++c)
      img(p, c) = static_cast<float>(buf[static_cast<std::size_t>(p) * 3 + c]) / 255.0f;
  return img;
}

}  // namespace graphau
