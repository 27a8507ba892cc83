#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"
#include "csud/rain.hpp"

namespace csud {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const char* key, const Range& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("rain params: '") + key + "' must be a number or [lo, hi]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

json params_json(const RainParams& p) {
  return {{"num_streaks", p.num_streaks},         {"length_px", range_json(p.length_px)},
          {"angle_deg", range_json(p.angle_deg)}, {"intensity", range_json(p.intensity)},
          {"thickness_px", p.thickness_px},       {"seed", p.seed}};
}

RainParams params_from(const json& j) {
  static const std::vector<std::string> known{"num_streaks", "length_px",    "angle_deg",
                                              "intensity",   "thickness_px", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("rain params: unknown key '" + key + "'");
    }
  }
  RainParams p;
  p.num_streaks = j.value("num_streaks", p.num_streaks);
  p.length_px = range_from(j, "length_px", p.length_px);
  p.angle_deg = range_from(j, "angle_deg", p.angle_deg);
  p.intensity = range_from(j, "intensity", p.intensity);
  p.thickness_px = j.value("thickness_px", p.thickness_px);
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string to_json(const RainParams& params) { return params_json(params).dump(2); }

RainParams rain_params_from_json(const std::string& text) {
  try {
    return params_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("rain params: ") + e.what());
  }
}

RainParams load_rain_params(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rain params: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return rain_params_from_json(ss.str());
}

std::string DatasetManifest::to_json() const {
  json files_json = json::array();
  for (const auto& f : files) {
    files_json.push_back({{"name", f.name}, {"role", f.role}, {"sub_seed", f.sub_seed}, {"source", f.source}});
  }
  json j{{"seed", seed},
         {"params", params_json(params)},
         {"split", {{"train", split.train}, {"test", split.test}}},
         {"files", files_json}};
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    DatasetManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.params = params_from(j.at("params"));
    if (j.contains("split")) {
      m.split.train = j["split"].at("train").get<int>();
      m.split.test = j["split"].at("test").get<int>();
    }
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("name").get<std::string>(), f.at("role").get<std::string>(),
                         f.at("sub_seed").get<uint64_t>(), f.value("source", std::string{})});
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
}

DatasetManifest make_desk_dataset(const fs::path& clean_dir, const fs::path& out_dir,
                                  const RainParams& params, const DatasetSplit& split) {
  params.validate();
  if (split.train < 2 || split.train % 2 != 0 || split.test < 1) {
    throw ConfigError("make_desk_dataset: train split must be even and >= 2, test split >= 1");
  }
  const auto sources = sorted_images(clean_dir);
  const auto needed = static_cast<size_t>(split.train + split.test);
  if (sources.size() < needed) {
    throw ConfigError("make_desk_dataset: " + clean_dir.string() + " holds " +
                      std::to_string(sources.size()) + " images, need " + std::to_string(needed));
  }

  for (const auto* sub : {"train/clean", "train/rainy", "test/rainy", "test/gt"}) {
    fs::create_directories(out_dir / sub);
  }

  DatasetManifest manifest;
  manifest.seed = params.seed;
  manifest.params = params;
  manifest.split = split;

  const size_t half = static_cast<size_t>(split.train / 2);
  for (size_t i = 0; i < needed; ++i) {
    const auto& src = sources[i];
    const auto name = src.stem().string() + ".png";
    const uint64_t sub_seed = derive_seed(params.seed, i);
    const auto clean = load_image(src);
    RainParams local = params;
    local.seed = sub_seed;

    if (i < half) {
      save_image(clean, out_dir / "train/clean" / name);
      manifest.files.push_back({name, "train_clean", sub_seed, src.filename().string()});
    } else if (i < static_cast<size_t>(split.train)) {
      save_image(synth_rain_ccp(clean, local), out_dir / "train/rainy" / name);
      manifest.files.push_back({name, "train_rainy", sub_seed, src.filename().string()});
    } else {
      save_image(synth_rain_ccp(clean, local), out_dir / "test/rainy" / name);
      save_image(clean, out_dir / "test/gt" / name);
      manifest.files.push_back({name, "test_rainy", sub_seed, src.filename().string()});
      manifest.files.push_back({name, "test_gt", sub_seed, src.filename().string()});
    }
  }

  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest: " + (out_dir / "manifest.json").string());
  out << manifest.to_json() << '\n';
  return manifest;
}

void write_clean_scenes(const fs::path& dir, int count, int64_t height, int64_t width, uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.png", i);
    save_image(synth_clean_scene(height, width, derive_seed(seed, static_cast<uint64_t>(i))), dir / name);
  }
}

}  // namespace csud
