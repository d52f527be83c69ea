#include "filterattack/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "filterattack/detector.hpp"
#include "filterattack/errors.hpp"
#include "filterattack/evolve.hpp"
#include "filterattack/filters.hpp"
#include "filterattack/image.hpp"
#include "filterattack/metrics.hpp"
#include "filterattack/run_config.hpp"

namespace filterattack::cli {

namespace fs = std::filesystem;

namespace {

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Files written by one command; removed again unless committed.
class OutputSet {
 public:
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
  }

  void write(const fs::path& path, const std::string& text) {
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
  }

  void track(const fs::path& path) { written_.push_back(path); }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> written_;
  bool committed_ = false;
};

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json report_json(const EvalReport& r) {
  return {{"n", r.n_images}, {"asr", r.asr},     {"dr", r.dr},
          {"fsdr", r.fsdr},  {"n_successful", r.n_successful}};
}

EvalReport evaluate_chain(const FilterChain& chain, const std::vector<Image>& images,
                          const FeatureSqueezeDetector& detector, int threads) {
  std::vector<Image> perturbed;
  perturbed.reserve(images.size());
  for (const auto& img : images) perturbed.push_back(apply_chain(img, chain));
  return evaluate_pairs(detector, images, perturbed, threads);
}

}  // namespace

CnnModel load_model(const ModelSource& source) {
  if (source.weights) return CnnModel::load(*source.weights);
  if (source.fixture_seed) return CnnModel::fixture(*source.fixture_seed);
  throw ArgumentError("no model given: pass --weights or --fixture-weights");
}

int cmd_attack(const AttackOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto started = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(options.config);
    if (options.seed) cfg.outer.seed = *options.seed;
    if (options.threads) cfg.outer.threads = *options.threads;
    if (options.threshold) cfg.threshold = *options.threshold;
    cfg.outer.validate();

    ModelSource source = options.model;
    if (!source.weights && !source.fixture_seed) {
      if (cfg.weights) source.weights = *cfg.weights;
      source.fixture_seed = cfg.fixture_weights;
    }
    const CnnModel model = load_model(source);

    const LabeledDataset dataset = load_cifar10_batch(options.dataset);
    const auto [train, test] = split_dataset(dataset, cfg.train_size);

    err << "attack: " << train.size() << " train / " << test.size() << " test images, inner "
        << inner_name(cfg.outer.inner) << ", seed " << cfg.outer.seed << "\n";
    const RunResult result = run(cfg.outer, train, model, cfg.squeezers, cfg.threshold);

    const CountingClassifier counted(model);
    const FeatureSqueezeDetector detector(counted, cfg.squeezers, cfg.threshold);
    const EvalReport train_report = evaluate_chain(result.best, train.images, detector, cfg.outer.threads);
    const EvalReport test_report = evaluate_chain(result.best, test.images, detector, cfg.outer.threads);
    const std::string optimizer(inner_name(cfg.outer.inner));

    std::string history = std::string(kHistoryCsvHeader) + "\n";
    for (const auto& row : result.history) history += to_csv_row(row) + "\n";
    const std::string summary = std::string(kEvalReportCsvHeader) + "\n" +
                                to_csv_row(train_report, optimizer, "train") + "\n" +
                                to_csv_row(test_report, optimizer, "test") + "\n";

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    nlohmann::json config_json = nlohmann::json::object();
    for (const auto& [k, v] : cfg.entries()) config_json[k] = v;
    nlohmann::json manifest = {
        {"config", config_json},
        {"seed", cfg.outer.seed},
        {"weights_source", source.weights ? source.weights->string()
                                          : "fixture:" + std::to_string(*source.fixture_seed)},
        {"weights_checksum", hex64(model.checksum())},
        {"dataset", options.dataset.string()},
        {"best_chain", result.best.serialize()},
        {"best_objectives", {{"f1", result.best_objectives.f1}, {"f2", result.best_objectives.f2}}},
        {"train", report_json(train_report)},
        {"test", report_json(test_report)},
        {"rounds", result.history.size()},
        {"classifier_queries", result.queries + counted.queries()},
        {"wall_clock_seconds", seconds},
    };

    fs::create_directories(options.out_dir);
    OutputSet outputs;
    outputs.write(options.out_dir / "best_chain.txt", result.best.serialize() + "\n");
    outputs.write(options.out_dir / "history.csv", history);
    outputs.write(options.out_dir / "summary.csv", summary);
    outputs.write(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    outputs.commit();

    out << summary;
    return kExitOk;
  });
}

int cmd_apply(const ApplyOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const FilterChain chain = parse_chain(read_text(options.chain));
    fs::create_directories(options.out_dir);
    const std::string stem = options.input.stem().string();
    OutputSet outputs;
    std::size_t written = 0;
    auto emit = [&](const fs::path& path, const Image& img) {
      outputs.track(path);
      write_image(img, path);
      ++written;
    };
    if (options.input.extension() == ".ppm") {
      const Image img = read_image(options.input);
      emit(options.out_dir / (stem + "_adv.ppm"), apply_chain(img, chain));
    } else {
      const LabeledDataset ds = load_cifar10_batch(options.input);
      char idx[16];
      for (std::size_t i = 0; i < ds.size(); ++i) {
        std::snprintf(idx, sizeof idx, "_%05zu", i);
        emit(options.out_dir / (stem + idx + ".ppm"), ds.images[i]);
        emit(options.out_dir / (stem + idx + "_adv.ppm"), apply_chain(ds.images[i], chain));
      }
    }
    outputs.commit();
    out << "wrote " << written << " images to " << options.out_dir.string() << "\n";
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg;
    if (options.config) cfg = load_run_config(*options.config);
    if (options.threshold) cfg.threshold = *options.threshold;
    ModelSource source = options.model;
    if (!source.weights && !source.fixture_seed) {
      if (cfg.weights) source.weights = *cfg.weights;
      source.fixture_seed = cfg.fixture_weights;
    }
    const CnnModel model = load_model(source);
    const FilterChain chain = parse_chain(read_text(options.chain));
    const LabeledDataset ds = load_cifar10_batch(options.dataset);
    const FeatureSqueezeDetector detector(model, cfg.squeezers, cfg.threshold);
    const EvalReport report = evaluate_chain(chain, ds.images, detector, options.threads);

    const std::string csv =
        std::string(kEvalReportCsvHeader) + "\n" + to_csv_row(report, "none", "evaluate") + "\n";
    if (options.csv_out) {
      OutputSet outputs;
      outputs.write(*options.csv_out, csv);
      outputs.commit();
    }
    char line[160];
    std::snprintf(line, sizeof line, "ASR %.4f  DR %.4f  FSDR %s  (n=%zu, successful=%zu)\n",
                  report.asr, report.dr,
                  report.n_successful ? std::to_string(report.fsdr).c_str() : "n/a",
                  report.n_images, report.n_successful);
    err << line;
    out << csv;
    return kExitOk;
  });
}

int cmd_detect(const DetectOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CnnModel model = load_model(options.model);
    const Image img = read_image(options.image);
    const DetectorVerdict v =
        detect(model, img, SqueezerConfig{}, options.threshold.value_or(kDefaultDetectionThreshold));
    char line[96];
    std::snprintf(line, sizeof line, "score=%.6f flagged=%s\n", v.score, v.flagged ? "true" : "false");
    out << line;
    return v.flagged ? kExitFlagged : kExitOk;
  });
}

}  // namespace filterattack::cli
