// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include "udd/digest.hpp"

namespace udd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestSchema = "udd-synth-manifest";
constexpr int kManifestVersion = 1;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Palette {
  std::array<double, 3> background, skin, hair;
  double stripe_period;
};

// Content ids map to fixed palettes independent of any dataset seed.
Palette palette_for(std::size_t content) {
  RngStream r(0x5EED'C0DE, content);
  Palette p{};
  for (auto& c : p.background) c = r.uniform(0.15, 0.85);
  for (auto& c : p.skin) c = r.uniform(0.35, 0.8);
  for (auto& c : p.hair) c = r.uniform(0.1, 0.5);
  p.stripe_period = 3.0 + static_cast<double>(content % 4);
  return p;
}

json image_to_json(const ImageConfig& c) {
  return {{"side", c.side},
          {"channels", c.channels},
          {"cell", c.cell},
          {"num_contents", c.num_contents},
          {"artifact_amplitude", c.artifact_amplitude},
          {"artifact_alpha", c.artifact_alpha},
          {"noise", c.noise},
          {"jitter", c.jitter}};
}

ImageConfig image_from_json(const json& j) {
  ImageConfig c;
  c.side = j.at("side").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.cell = j.at("cell").get<std::size_t>();
  c.num_contents = j.at("num_contents").get<std::size_t>();
  c.artifact_amplitude = j.at("artifact_amplitude").get<double>();
  c.artifact_alpha = j.at("artifact_alpha").get<double>();
  c.noise = j.at("noise").get<double>();
  c.jitter = j.at("jitter").get<double>();
  c.validate();
  return c;
}

void warn_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where,
                  std::ostream* warnings) {
  if (warnings == nullptr) return;
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      *warnings << "warning: " << where << ": ignoring unknown field '" << key << "'\n";
    }
  }
}

}  // namespace

void ImageConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ImageConfig: " + m); };
  if (cell == 0 || side == 0 || side % cell != 0) fail("cell must divide side");
  if (grid_side() < 4 || grid_side() % 2 != 0) fail("grid side must be even and at least 4");
  if (channels != 3) fail("only 3-channel images are supported");
  if (num_contents < 2 || num_contents % 2 != 0) fail("num_contents must be even and at least 2");
  if (artifact_alpha < 0.0 || artifact_alpha > 1.0) fail("artifact_alpha must be in [0, 1]");
  if (noise < 0.0 || jitter < 0.0 || artifact_amplitude < 0.0) fail("noise, jitter, amplitude must be non-negative");
}

std::vector<std::size_t> center_cells(std::size_t g) {
  const std::size_t a = g / 2 - 1, b = g / 2;
  return {a * g + a, a * g + b, b * g + a, b * g + b};
}

bool is_center_cell(std::size_t cell, std::size_t g) {
  const auto c = center_cells(g);
  return std::find(c.begin(), c.end(), cell) != c.end();
}

SynthSample generate_sample(const SynthFactors& f, RngStream rng, const ImageConfig& cfg) {
  cfg.validate();
  if (f.forged != 0 && f.forged != 1) throw std::invalid_argument("generate_sample: forged flag must be 0 or 1");
  if (f.content >= cfg.num_contents) {
    throw std::invalid_argument("generate_sample: content id " + std::to_string(f.content) + " out of range");
  }
  if (f.forged == 1 && (!f.cell || *f.cell >= cfg.num_cells())) {
    throw std::invalid_argument("generate_sample: artifact cell out of grid");
  }
  if (f.forged == 0 && f.cell) throw std::invalid_argument("generate_sample: real sample carries an artifact cell");

  const std::size_t s = cfg.side;
  const auto pal = palette_for(f.content);
  const double jitter = rng.uniform(-cfg.jitter, cfg.jitter);
  const double cy = 0.55 * static_cast<double>(s), cx = 0.5 * static_cast<double>(s);
  const double ry = 0.36 * static_cast<double>(s), rx = 0.28 * static_cast<double>(s);
  const auto hair_rows = static_cast<double>(s) * 0.22;

  SynthSample out;
  out.pixels.resize(cfg.pixels());
  out.label = f.forged;
  out.factors = f;
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double dy = (static_cast<double>(y) + 0.5 - cy) / ry, dx = (static_cast<double>(x) + 0.5 - cx) / rx;
      const double face = 1.0 / (1.0 + std::exp(-6.0 * (1.0 - dy * dy - dx * dx)));
      const bool hair = static_cast<double>(y) < hair_rows;
      const double stripe = 0.08 * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / pal.stripe_period);
      for (std::size_t c = 0; c < 3; ++c) {
        double v = hair ? pal.hair[c] + stripe : pal.background[c] * (1.0 - face) + pal.skin[c] * face;
        v += jitter + cfg.noise * rng.normal();
        out.pixels[(c * s + y) * s + x] = v;
      }
    }

  if (f.forged == 1) {
    const std::size_t g = cfg.grid_side(), gy = *f.cell / g, gx = *f.cell % g;
    const double delta = cfg.artifact_alpha * cfg.artifact_amplitude;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = gy * cfg.cell; y < (gy + 1) * cfg.cell; ++y)
        for (std::size_t x = gx * cfg.cell; x < (gx + 1) * cfg.cell; ++x)
          out.pixels[(c * s + y) * s + x] += (x + y) % 2 == 0 ? delta : -delta;
  }
  for (auto& v : out.pixels) v = quantize(v);
  return out;
}

double cell_hf_energy(std::span<const double> px, const ImageConfig& cfg, std::size_t cell) {
  const std::size_t g = cfg.grid_side(), s = cfg.side, k = cfg.cell;
  if (cell >= g * g) throw std::invalid_argument("cell_hf_energy: cell out of grid");
  if (px.size() != cfg.pixels()) throw std::invalid_argument("cell_hf_energy: pixel count mismatch");
  const std::size_t y0 = (cell / g) * k, x0 = (cell % g) * k;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < cfg.channels; ++c)
    for (std::size_t y = y0; y + 1 < y0 + k; ++y)
      for (std::size_t x = x0; x + 1 < x0 + k; ++x) {
        auto at = [&](std::size_t yy, std::size_t xx) { return px[(c * s + yy) * s + xx]; };
        const double r = at(y, x) - at(y, x + 1) - at(y + 1, x) + at(y + 1, x + 1);
        total += r * r;
        ++count;
      }
  return total / static_cast<double>(count);
}

double hf_threshold(const ImageConfig& cfg) {
  const double r = 4.0 * cfg.artifact_alpha * cfg.artifact_amplitude;
  return r * r / 4.0;
}

void BiasSpec::validate() const {
  if (!(pos >= 0.0 && pos <= 1.0) || !(content >= 0.0 && content <= 1.0)) {
    throw std::invalid_argument("BiasSpec: pos and content must be probabilities, got pos=" + std::to_string(pos) +
                                " content=" + std::to_string(content));
  }
}

BiasSpec BiasSpec::parse(const std::string& text) {
  BiasSpec b;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("bias: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) throw std::invalid_argument("bias: bad number '" + value + "'");
    if (key == "pos") {
      b.pos = v;
    } else if (key == "content") {
      b.content = v;
    } else {
      throw std::invalid_argument("bias: unknown key '" + key + "' (expected pos or content)");
    }
  }
  b.validate();
  return b;
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "iid") return Split::iid;
  if (name == "shifted") return Split::shifted;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, iid or shifted)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::iid: return "iid";
    case Split::shifted: return "shifted";
  }
  return "?";
}

std::string Dataset::digest() const {
  Fnv1a h;
  h.update(image_to_json(image).dump());
  h.update(split_name(split));
  h.update(std::uint64_t{samples.size()});
  for (const auto& s : samples) {
    h.update(static_cast<std::uint64_t>(s.label));
    h.update(std::uint64_t{s.video_id});
    h.update(std::uint64_t{s.frame});
    for (double v : s.pixels) h.update(static_cast<std::uint64_t>(std::lround(v * 255.0)));
  }
  return h.hex();
}

Tensor Dataset::batch_images(std::span<const std::size_t> rows) const {
  const std::size_t p = image.pixels();
  std::vector<double> v(rows.size() * p);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(samples.at(rows[i]).pixels.begin(), samples[rows[i]].pixels.end(),
              v.begin() + static_cast<std::ptrdiff_t>(i * p));
  return Tensor::from({rows.size(), image.channels, image.side, image.side}, std::move(v));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = samples.at(rows[i]).label;
  return out;
}

std::vector<double> Dataset::channel_means() const {
  std::vector<double> m(image.channels, 0.0);
  const std::size_t plane = image.side * image.side;
  for (const auto& s : samples)
    for (std::size_t c = 0; c < image.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i) m[c] += s.pixels[c * plane + i];
  if (!samples.empty())
    for (auto& v : m) v /= static_cast<double>(samples.size() * plane);
  return m;
}

Dataset generate_dataset(std::size_t n, const BiasSpec& bias, Split split, std::uint64_t seed,
                         const ImageConfig& cfg) {
  cfg.validate();
  bias.validate();
  if (n < 2) throw std::invalid_argument("generate_dataset: need at least 2 samples, got " + std::to_string(n));
  Dataset ds;
  ds.image = cfg;
  ds.bias = bias;
  ds.split = split;
  ds.seed = seed;
  const RngStream root(seed, 0xDA7A + static_cast<std::uint64_t>(split));
  const std::size_t g = cfg.grid_side();
  const auto center = center_cells(g);
  std::vector<std::size_t> off_center;
  for (std::size_t c = 0; c < g * g; ++c)
    if (!is_center_cell(c, g)) off_center.push_back(c);

  const std::size_t videos = (n + kFramesPerVideo - 1) / kFramesPerVideo;
  // Alternate labels within every consecutive pair of videos but randomise
  // which comes first, so label is not a function of video index parity.
  for (std::size_t v = 0; v < videos; ++v) {
    auto vr = root.split({1, v});
    SynthFactors f;
    const int first = static_cast<int>(root.split({0, v / 2}).below(2));
    f.forged = v % 2 == 0 ? first : 1 - first;
    int parity = 0;
    if (split == Split::shifted) {
      parity = static_cast<int>(vr.below(2));
    } else {
      parity = vr.uniform() < bias.content ? f.forged : 1 - f.forged;
    }
    f.content = 2 * vr.below(cfg.num_contents / 2) + static_cast<std::size_t>(parity);
    if (f.forged == 1) {
      if (split != Split::shifted && vr.uniform() < bias.pos) {
        f.cell = center[vr.below(center.size())];
      } else {
        f.cell = off_center[vr.below(off_center.size())];
      }
    }
    for (std::size_t fr = 0; fr < kFramesPerVideo && ds.samples.size() < n; ++fr) {
      auto s = generate_sample(f, root.split({2, v, fr}), cfg);
      s.video_id = v;
      s.frame = fr;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

void write_ppm(const fs::path& path, std::span<const double> px, std::size_t side) {
  if (px.size() != 3 * side * side) throw std::invalid_argument("write_ppm: expected 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << side << ' ' << side << "\n255\n";
  const std::size_t plane = side * side;
  std::vector<unsigned char> bytes(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      bytes[3 * i + c] = static_cast<unsigned char>(std::lround(std::clamp(px[c * plane + i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<double> read_ppm(const fs::path& path, std::size_t expected_side) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing image file " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || maxval != 255) throw std::runtime_error("malformed PPM header in " + path.string());
  if (w != expected_side || h != expected_side) {
    throw std::runtime_error(path.string() + ": image is " + std::to_string(w) + "x" + std::to_string(h) +
                             ", expected " + std::to_string(expected_side) + "x" + std::to_string(expected_side));
  }
  in.get();
  const std::size_t plane = w * h;
  std::vector<unsigned char> bytes(3 * plane);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("truncated pixel data in " + path.string());
  }
  std::vector<double> px(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) px[c * plane + i] = bytes[3 * i + c] / 255.0;
  return px;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  json header = {{"schema", kManifestSchema},
                 {"version", kManifestVersion},
                 {"split", split_name(ds.split)},
                 {"seed", ds.seed},
                 {"bias", {{"pos", ds.bias.pos}, {"content", ds.bias.content}}},
                 {"image", image_to_json(ds.image)},
                 {"count", ds.samples.size()}};
  manifest << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    std::ostringstream name;
    name << "images/" << std::setw(6) << std::setfill('0') << i << ".ppm";
    write_ppm(dir / name.str(), s.pixels, ds.image.side);
    json factors = {{"forged", s.factors.forged}, {"content", s.factors.content}};
    factors["cell"] = s.factors.cell ? json(*s.factors.cell) : json(nullptr);
    json line = {{"path", name.str()}, {"label", s.label}, {"video_id", s.video_id}, {"frame", s.frame},
                 {"factors", factors}};
    manifest << line.dump() << '\n';
  }
  if (!manifest) throw std::runtime_error("short write to manifest in " + dir.string());
}

Dataset load_dataset(const fs::path& dir, std::ostream* warnings) {
  const auto manifest_path = dir / "manifest.jsonl";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("missing manifest " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty manifest " + manifest_path.string());

  Dataset ds;
  std::size_t count = 0;
  try {
    const auto header = json::parse(line);
    if (header.at("schema").get<std::string>() != kManifestSchema) throw std::runtime_error("unexpected schema");
    if (header.at("version").get<int>() != kManifestVersion) {
      throw std::runtime_error("unsupported manifest version " + std::to_string(header.at("version").get<int>()));
    }
    warn_unknown(header, {"schema", "version", "split", "seed", "bias", "image", "count"}, "manifest header",
                 warnings);
    ds.split = parse_split(header.at("split").get<std::string>());
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.bias.pos = header.at("bias").at("pos").get<double>();
    ds.bias.content = header.at("bias").at("content").get<double>();
    ds.image = image_from_json(header.at("image"));
    count = header.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": bad header: " + e.what());
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(lineno);
    SynthSample s;
    std::string rel;
    try {
      const auto j = json::parse(line);
      warn_unknown(j, {"path", "label", "video_id", "frame", "factors"}, where, warnings);
      rel = j.at("path").get<std::string>();
      s.label = j.at("label").get<int>();
      s.video_id = j.at("video_id").get<std::size_t>();
      s.frame = j.at("frame").get<std::size_t>();
      const auto& f = j.at("factors");
      warn_unknown(f, {"forged", "content", "cell"}, where + " factors", warnings);
      s.factors.forged = f.at("forged").get<int>();
      s.factors.content = f.at("content").get<std::size_t>();
      if (!f.at("cell").is_null()) s.factors.cell = f.at("cell").get<std::size_t>();
    } catch (const json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    if (s.label != s.factors.forged || (s.label != 0 && s.label != 1)) {
      throw std::runtime_error(where + ": label does not match forged factor");
    }
    s.pixels = read_ppm(dir / rel, ds.image.side);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != count) {
    throw std::runtime_error(manifest_path.string() + ": header says " + std::to_string(count) + " samples, found " +
                             std::to_string(ds.samples.size()));
  }
  return ds;
}

std::vector<double> cutout_center(std::span<const double> px, const ImageConfig& cfg, std::size_t s,
                                  std::span<const double> fill) {
  if (s > cfg.side) {
    throw std::invalid_argument("cutout_center: size " + std::to_string(s) + " exceeds image side " +
                                std::to_string(cfg.side));
  }
  if (fill.size() != cfg.channels) throw std::invalid_argument("cutout_center: need one fill value per channel");
  if (px.size() != cfg.pixels()) throw std::invalid_argument("cutout_center: pixel count mismatch");
  std::vector<double> out(px.begin(), px.end());
  const std::size_t o = (cfg.side - s) / 2, side = cfg.side;
  for (std::size_t c = 0; c < cfg.channels; ++c)
    for (std::size_t y = o; y < o + s; ++y)
      for (std::size_t x = o; x < o + s; ++x) out[(c * side + y) * side + x] = fill[c];
  return out;
}

}  // namespace udd
