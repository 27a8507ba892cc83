#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csud/error.hpp"
#include "csud/eval.hpp"
#include "csud/trainer.hpp"

namespace csud {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

std::string config_key(const std::string& key) {
  if (key == "cc") return "cc_enabled";
  if (key == "sr") return "sr_enabled";
  if (key == "gans") return "num_gan_constraints";
  return key;
}

ojson toggle_value(const std::string& value) {
  if (value == "on") return true;
  if (value == "off") return false;
  auto parsed = ojson::parse(value, nullptr, false);
  if (parsed.is_discarded()) return value;
  return parsed;
}

}  // namespace

std::vector<AblationToggle> parse_toggles(const std::string& spec) {
  std::vector<AblationToggle> toggles;
  if (spec.find_first_not_of(" \t") == std::string::npos) return toggles;
  for (const auto& part : split(spec, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == part.size()) {
      throw ConfigError("bad toggle '" + part + "' (expected key=v1|v2)");
    }
    AblationToggle t{part.substr(0, eq), split(part.substr(eq + 1), '|')};
    for (const auto& v : t.values) {
      if (v.empty()) throw ConfigError("empty value in toggle '" + part + "'");
    }
    for (const auto& other : toggles) {
      if (other.key == t.key) throw ConfigError("toggle '" + t.key + "' given twice");
    }
    toggles.push_back(std::move(t));
  }
  return toggles;
}

std::vector<const AblationRow*> AblationTable::ranked() const {
  std::vector<const AblationRow*> out;
  for (const auto& r : rows) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](const AblationRow* a, const AblationRow* b) {
    return a->report.mean_psnr_db > b->report.mean_psnr_db;
  });
  return out;
}

const AblationRow& AblationTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw InvalidInput("ablation table has no row '" + label + "'");
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "rank,label,psnr_db,ssim,checkpoint\n";
  for (const auto* r : ranked()) {
    os << r->rank << ",\"" << r->label << "\"," << r->report.mean_psnr_db << ',' << r->report.mean_ssim << ','
       << r->checkpoint.string() << '\n';
  }
  return os.str();
}

std::string AblationTable::to_json() const {
  auto arr = ojson::array();
  for (const auto* r : ranked()) {
    arr.push_back({{"rank", r->rank},
                   {"label", r->label},
                   {"psnr_db", r->report.mean_psnr_db},
                   {"ssim", r->report.mean_ssim},
                   {"checkpoint", r->checkpoint.string()},
                   {"overrides", ojson::parse(r->overrides_json)},
                   {"config", ojson::parse(r->config_json)}});
  }
  ojson j;
  j["rows"] = arr;
  return j.dump(2);
}

AblationTable ablation_run(const TrainConfig& base, const std::vector<AblationToggle>& toggles) {
  base.validate();
  if (base.train_dir.empty() || base.test_dir.empty()) {
    throw ConfigError("ablation needs train_dir and test_dir in the base config");
  }
  const auto corpus = UnpairedCorpus::from_root(base.train_dir, base.crop, base.seed);
  const auto testset = load_paired_testset(base.test_dir);
  const auto base_json = to_json(base);

  // Cartesian product, last toggle varying fastest.
  std::vector<size_t> index(toggles.size(), 0);
  AblationTable table;
  while (true) {
    ojson overrides = ojson::object();
    std::string label;
    for (size_t i = 0; i < toggles.size(); ++i) {
      const auto& value = toggles[i].values[index[i]];
      overrides[config_key(toggles[i].key)] = toggle_value(value);
      label += (i ? "," : "") + toggles[i].key + "=" + value;
    }
    if (label.empty()) label = "base";
    auto config = resolve_train_config(base_json, overrides.dump());
    config.output_dir = (fs::path(base.output_dir) / label).string();

    AblationRow row;
    row.label = label;
    row.overrides_json = overrides.dump();
    row.config_json = to_json(config);
    const auto result = train(config, corpus);
    row.checkpoint = result.final_checkpoint;
    row.report = evaluate_checkpoint(result.final_checkpoint, testset);
    table.rows.push_back(std::move(row));

    bool carry = true;
    for (size_t k = toggles.size(); carry && k > 0; --k) {
      if (++index[k - 1] < toggles[k - 1].values.size()) {
        carry = false;
      } else {
        index[k - 1] = 0;
      }
    }
    if (carry) break;
  }

  std::vector<size_t> order(table.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return table.rows[a].report.mean_psnr_db > table.rows[b].report.mean_psnr_db;
  });
  for (size_t i = 0; i < order.size(); ++i) table.rows[order[i]].rank = static_cast<int>(i + 1);
  return table;
}

}  // namespace csud
