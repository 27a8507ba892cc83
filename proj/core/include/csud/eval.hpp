#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "csud/config.hpp"
#include "csud/data.hpp"
#include "csud/image.hpp"
#include "csud/models.hpp"

namespace csud {

/// Maps a (1, 3, H, W) rainy batch to its restoration.
using DerainFn = std::function<torch::Tensor(const torch::Tensor& rainy)>;

DerainFn as_function(DerainerImpl& derainer);
DerainFn identity_derainer();

struct ImageScore {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string checkpoint;
  std::vector<ImageScore> images;  // test-set order
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  std::vector<std::string> notes;  // protocol and reference context

  std::string to_json() const;
  std::string to_csv() const;
};

/// Full-resolution inference per pair, output clamped to [0, 1] before scoring.
EvalReport evaluate(const DerainFn& derainer, const PairedTestSet& testset, const std::string& checkpoint_id = "");
EvalReport evaluate(DerainerImpl& derainer, const PairedTestSet& testset, const std::string& checkpoint_id = "");
/// Loads the derainer stored in a checkpoint file and evaluates it.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const PairedTestSet& testset);

/// Writes `report.to_json()` to `path` and the CSV next to it (same stem, .csv).
void write_report(const EvalReport& report, const std::filesystem::path& path);

enum class CcpMode { kPaired, kCorpus };
std::string to_string(CcpMode mode);
CcpMode ccp_mode_from_string(const std::string& name);

struct CcpPairScore {
  std::string name;
  double rg = 0.0;
  double gb = 0.0;
  double br = 0.0;
};

struct CcpReport {
  CcpMode mode = CcpMode::kPaired;
  std::vector<CcpPairScore> images;  // empty in corpus mode
  double mean_rg = 0.0;
  double mean_gb = 0.0;
  double mean_br = 0.0;
  int64_t degenerate = 0;  // pairs where a residual had zero norm

  std::string to_json() const;
};

/// Cosine similarity between clean and rainy cycle residuals per channel pair.
/// Paired mode scores each image and averages; corpus mode pools the flattened
/// residuals of every image on each side.
CcpReport ccp_report(const std::vector<ImageTensor>& clean, const std::vector<ImageTensor>& rainy,
                     CcpMode mode = CcpMode::kPaired, const std::vector<std::string>& names = {});
/// Directory form; files are matched by sorted order in paired mode.
CcpReport ccp_report(const std::filesystem::path& clean_dir, const std::filesystem::path& rainy_dir,
                     CcpMode mode = CcpMode::kPaired);

/// Bar chart of the three corpus means on a [0, 1] axis.
void write_ccp_chart(const CcpReport& report, const std::filesystem::path& png_path);

struct GeneralizationCell {
  std::string checkpoint;
  std::string testset;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
};

struct GeneralizationMatrix {
  std::vector<std::string> checkpoints;
  std::vector<std::string> testsets;
  std::vector<GeneralizationCell> cells;  // row-major, checkpoints x testsets

  const GeneralizationCell& cell(size_t checkpoint, size_t testset) const;
  std::string to_csv() const;
  std::string to_json() const;
};

GeneralizationMatrix generalization_matrix(const std::vector<std::filesystem::path>& checkpoints,
                                           const std::vector<std::filesystem::path>& testsets);

/// One axis of an ablation grid: a config key (or alias cc, sr, gans) and the
/// values it takes. Values are JSON literals or on/off.
struct AblationToggle {
  std::string key;
  std::vector<std::string> values;
};

/// "cc=on|off,sr=on|off,gans=1|4,alpha1=5|10"
std::vector<AblationToggle> parse_toggles(const std::string& spec);

struct AblationRow {
  std::string label;           // "cc=on,sr=off" or "base"
  std::string overrides_json;  // keys applied on top of the base config
  std::string config_json;     // resolved config echo
  std::filesystem::path checkpoint;
  EvalReport report;
  int rank = 0;                // 1 = best mean PSNR
};

struct AblationTable {
  std::vector<AblationRow> rows;  // cartesian-product order

  std::vector<const AblationRow*> ranked() const;
  const AblationRow& row(const std::string& label) const;
  std::string to_csv() const;
  std::string to_json() const;
};

/// Trains every variant of the cartesian product of `toggles` on the base
/// config's corpus and evaluates each on its test set. Variant outputs go to
/// <output_dir>/<label>.
AblationTable ablation_run(const TrainConfig& base, const std::vector<AblationToggle>& toggles);

}  // namespace csud
