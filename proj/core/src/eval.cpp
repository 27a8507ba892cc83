#include "csud/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "csud/checkpoint.hpp"
#include "csud/error.hpp"
#include "csud/trainer.hpp"

namespace csud {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kReferencePsnr = 33.28;
constexpr double kReferenceSsim = 0.954;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

DerainFn as_function(DerainerImpl& derainer) {
  return [&derainer](const torch::Tensor& rainy) { return derainer.forward(rainy); };
}

DerainFn identity_derainer() {
  return [](const torch::Tensor& rainy) { return rainy; };
}

std::string EvalReport::to_json() const {
  ojson j;
  j["dataset"] = dataset;
  j["checkpoint"] = checkpoint;
  j["notes"] = notes;
  j["mean_psnr_db"] = mean_psnr_db;
  j["mean_ssim"] = mean_ssim;
  auto arr = ojson::array();
  for (const auto& s : images) arr.push_back({{"name", s.name}, {"psnr_db", s.psnr_db}, {"ssim", s.ssim}});
  j["images"] = arr;
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  for (const auto& n : notes) os << "# " << n << '\n';
  os << "name,psnr_db,ssim\n";
  for (const auto& s : images) os << csv_field(s.name) << ',' << fmt(s.psnr_db) << ',' << fmt(s.ssim) << '\n';
  os << "mean," << fmt(mean_psnr_db) << ',' << fmt(mean_ssim) << '\n';
  return os.str();
}

EvalReport evaluate(const DerainFn& derainer, const PairedTestSet& testset, const std::string& checkpoint_id) {
  if (testset.pairs.empty()) throw ConfigError("evaluate: test set '" + testset.root.string() + "' is empty");
  EvalReport report;
  report.dataset = testset.name();
  report.checkpoint = checkpoint_id;
  report.notes = {
      "metrics on clamped RGB output at full resolution, no border crop",
      "paper-scale reference (not reproduced at desk scale): " + fmt(kReferencePsnr) + " dB / " +
          fmt(kReferenceSsim) + " SSIM on Rain100L",
  };
  torch::NoGradGuard no_grad;
  double sum_psnr = 0.0;
  double sum_ssim = 0.0;
  for (const auto& pair : testset.pairs) {
    const auto rainy = load_image(pair.rainy);
    const auto gt = load_image(pair.gt);
    if (rainy.height() != gt.height() || rainy.width() != gt.width()) {
      throw InvalidInput("evaluate: size mismatch for pair '" + pair.name + "'");
    }
    auto out = derainer(rainy.tensor().unsqueeze(0)).squeeze(0).to(torch::kFloat32).clamp(0.0, 1.0);
    const auto q = score(ImageTensor(out), gt);
    report.images.push_back({pair.name, q.psnr_db, q.ssim});
    sum_psnr += q.psnr_db;
    sum_ssim += q.ssim;
  }
  const auto n = static_cast<double>(report.images.size());
  report.mean_psnr_db = sum_psnr / n;
  report.mean_ssim = sum_ssim / n;
  return report;
}

EvalReport evaluate(DerainerImpl& derainer, const PairedTestSet& testset, const std::string& checkpoint_id) {
  const bool was_training = derainer.is_training();
  derainer.eval();
  auto report = evaluate(as_function(derainer), testset, checkpoint_id);
  derainer.train(was_training);
  return report;
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const PairedTestSet& testset) {
  auto models = load_models(checkpoint);
  return evaluate(*models.derainer, testset, checkpoint.string());
}

void write_report(const EvalReport& report, const fs::path& path) {
  write_text(path, report.to_json() + "\n");
  auto csv = path;
  csv.replace_extension(".csv");
  write_text(csv, report.to_csv());
}

std::string to_string(CcpMode mode) { return mode == CcpMode::kPaired ? "paired" : "corpus"; }

CcpMode ccp_mode_from_string(const std::string& name) {
  if (name == "paired") return CcpMode::kPaired;
  if (name == "corpus") return CcpMode::kCorpus;
  throw ConfigError("unknown ccp mode '" + name + "' (expected paired or corpus)");
}

std::string CcpReport::to_json() const {
  ojson j;
  j["mode"] = to_string(mode);
  j["mean"] = {{"rg", mean_rg}, {"gb", mean_gb}, {"br", mean_br}};
  j["degenerate"] = degenerate;
  auto arr = ojson::array();
  for (const auto& s : images) arr.push_back({{"name", s.name}, {"rg", s.rg}, {"gb", s.gb}, {"br", s.br}});
  j["images"] = arr;
  return j.dump(2);
}

CcpReport ccp_report(const std::vector<ImageTensor>& clean, const std::vector<ImageTensor>& rainy, CcpMode mode,
                     const std::vector<std::string>& names) {
  if (clean.empty() || rainy.empty()) throw InvalidInput("ccp_report: empty image set");
  if (mode == CcpMode::kPaired && clean.size() != rainy.size()) {
    throw InvalidInput("ccp_report: paired mode needs equal counts (" + std::to_string(clean.size()) + " clean, " +
                       std::to_string(rainy.size()) + " rainy)");
  }
  CcpReport report;
  report.mode = mode;
  auto residuals = [](const ImageTensor& img) {
    auto r = cycle_subtract(img.tensor().to(torch::kFloat64));
    return std::array<torch::Tensor, 3>{r.rg.flatten(), r.gb.flatten(), r.br.flatten()};
  };

  if (mode == CcpMode::kPaired) {
    for (size_t i = 0; i < clean.size(); ++i) {
      if (clean[i].height() != rainy[i].height() || clean[i].width() != rainy[i].width()) {
        throw InvalidInput("ccp_report: size mismatch at pair " + std::to_string(i));
      }
      const auto a = residuals(clean[i]);
      const auto b = residuals(rainy[i]);
      std::array<double, 3> v{};
      for (int k = 0; k < 3; ++k) {
        const auto c = csud::cosine_similarity(a[k], b[k]);
        v[k] = c.value;
        report.degenerate += c.degenerate ? 1 : 0;
      }
      const auto name = i < names.size() ? names[i] : std::to_string(i);
      report.images.push_back({name, v[0], v[1], v[2]});
    }
    const auto n = static_cast<double>(report.images.size());
    for (const auto& s : report.images) {
      report.mean_rg += s.rg / n;
      report.mean_gb += s.gb / n;
      report.mean_br += s.br / n;
    }
    return report;
  }

  std::array<std::vector<torch::Tensor>, 3> pool_a, pool_b;
  for (const auto& img : clean) {
    const auto r = residuals(img);
    for (int k = 0; k < 3; ++k) pool_a[k].push_back(r[k]);
  }
  for (const auto& img : rainy) {
    const auto r = residuals(img);
    for (int k = 0; k < 3; ++k) pool_b[k].push_back(r[k]);
  }
  std::array<double, 3> v{};
  for (int k = 0; k < 3; ++k) {
    const auto a = torch::cat(pool_a[k]);
    const auto b = torch::cat(pool_b[k]);
    if (a.numel() != b.numel()) throw InvalidInput("ccp_report: corpus mode needs equal pooled pixel counts");
    const auto c = csud::cosine_similarity(a, b);
    v[k] = c.value;
    report.degenerate += c.degenerate ? 1 : 0;
  }
  report.mean_rg = v[0];
  report.mean_gb = v[1];
  report.mean_br = v[2];
  return report;
}

CcpReport ccp_report(const fs::path& clean_dir, const fs::path& rainy_dir, CcpMode mode) {
  const auto clean_paths = list_images(clean_dir);
  const auto rainy_paths = list_images(rainy_dir);
  std::vector<ImageTensor> clean, rainy;
  std::vector<std::string> names;
  for (const auto& p : clean_paths) {
    clean.push_back(load_image(p));
    names.push_back(p.filename().string());
  }
  for (const auto& p : rainy_paths) rainy.push_back(load_image(p));
  return ccp_report(clean, rainy, mode, names);
}

void write_ccp_chart(const CcpReport& report, const fs::path& png_path) {
  constexpr int kWidth = 360, kHeight = 260, kBase = 220, kTop = 30, kBar = 70;
  cv::Mat canvas(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::line(canvas, {20, kBase}, {kWidth - 20, kBase}, cv::Scalar(0, 0, 0), 1);
  cv::line(canvas, {20, kTop}, {kWidth - 20, kTop}, cv::Scalar(200, 200, 200), 1);
  const std::array<std::pair<const char*, double>, 3> bars{
      {{"R-G", report.mean_rg}, {"G-B", report.mean_gb}, {"B-R", report.mean_br}}};
  for (size_t i = 0; i < bars.size(); ++i) {
    const int x0 = 40 + static_cast<int>(i) * 105;
    const double v = std::clamp(bars[i].second, 0.0, 1.0);
    const int top = kBase - static_cast<int>(std::lround(v * (kBase - kTop)));
    cv::rectangle(canvas, {x0, top}, {x0 + kBar, kBase}, cv::Scalar(180, 110, 40), cv::FILLED);
    cv::putText(canvas, bars[i].first, {x0 + 15, kBase + 25}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
    std::ostringstream label;
    label.precision(4);
    label << bars[i].second;
    cv::putText(canvas, label.str(), {x0 + 5, top - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0));
  }
  cv::putText(canvas, "CCP cosine similarity (" + to_string(report.mode) + ")", {20, 20},
              cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  if (!cv::imwrite(png_path.string(), canvas)) throw IoError("cannot write chart " + png_path.string());
}

const GeneralizationCell& GeneralizationMatrix::cell(size_t checkpoint, size_t testset) const {
  if (checkpoint >= checkpoints.size() || testset >= testsets.size()) {
    throw InvalidInput("generalization matrix index out of range");
  }
  return cells.at(checkpoint * testsets.size() + testset);
}

std::string GeneralizationMatrix::to_csv() const {
  std::ostringstream os;
  os << "checkpoint,testset,psnr_db,ssim\n";
  for (const auto& c : cells) {
    os << csv_field(c.checkpoint) << ',' << csv_field(c.testset) << ',' << fmt(c.mean_psnr_db) << ','
       << fmt(c.mean_ssim) << '\n';
  }
  return os.str();
}

std::string GeneralizationMatrix::to_json() const {
  ojson j;
  j["checkpoints"] = checkpoints;
  j["testsets"] = testsets;
  auto arr = ojson::array();
  for (const auto& c : cells) {
    arr.push_back({{"checkpoint", c.checkpoint}, {"testset", c.testset}, {"psnr_db", c.mean_psnr_db},
                   {"ssim", c.mean_ssim}});
  }
  j["cells"] = arr;
  return j.dump(2);
}

GeneralizationMatrix generalization_matrix(const std::vector<fs::path>& checkpoints,
                                           const std::vector<fs::path>& testsets) {
  if (checkpoints.empty() || testsets.empty()) {
    throw ConfigError("generalization_matrix needs at least one checkpoint and one test set");
  }
  GeneralizationMatrix m;
  std::vector<PairedTestSet> sets;
  for (const auto& t : testsets) {
    sets.push_back(load_paired_testset(t));
    m.testsets.push_back(t.string());
  }
  for (const auto& c : checkpoints) m.checkpoints.push_back(c.string());
  for (const auto& c : checkpoints) {
    if (!fs::exists(c)) {
      throw IoError("generalization cell (" + c.string() + ", " + testsets.front().string() +
                    "): checkpoint not found");
    }
    auto models = load_models(c);
    models.derainer->eval();
    for (size_t t = 0; t < sets.size(); ++t) {
      const auto r = evaluate(*models.derainer, sets[t], c.string());
      m.cells.push_back({c.string(), testsets[t].string(), r.mean_psnr_db, r.mean_ssim});
    }
  }
  return m;
}

}  // namespace csud
