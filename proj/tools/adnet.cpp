#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "adnet/checkpoint.hpp"
#include "adnet/config.hpp"
#include "adnet/data.hpp"
#include "adnet/evaluation.hpp"
#include "adnet/image_io.hpp"
#include "adnet/losses.hpp"
#include "adnet/model.hpp"
#include "adnet/training.hpp"

namespace fs = std::filesystem;
using namespace adnet;

namespace {

config::RunConfig load_or_default(const std::string& path) {
  if (path.empty()) return config::RunConfig{};
  return config::load_config(path);
}

std::vector<data::Sample> load_data_dir(const std::string& dir, int target_size) {
  const fs::path root(dir);
  return data::load_dataset((root / "images").string(), (root / "masks").string(), target_size);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

evaluation::MetricsReport evaluate_samples(model::AdNet& net,
                                           const std::vector<data::Sample>& samples) {
  std::vector<evaluation::PerImageRecord> records;
  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [image, mask] = data::make_batch(samples, {i});
    Tape tape;
    NodeId x = tape.constant(std::move(image), "input");
    auto fwd = net.forward(tape, x, model::Mode::Infer);
    const Tensor& prob = tape.value(fwd.final_out);
    records.push_back(
        {samples[i].id, evaluation::metrics_from_counts(evaluation::confusion(prob, mask))});
    for (std::size_t k = 0; k < prob.size(); ++k) {
      pooled_scores.push_back(prob.data[k]);
      pooled_labels.push_back(mask.data[k] != 0.0 ? 1 : 0);
    }
  }
  return evaluation::aggregate_report(std::move(records), pooled_scores, pooled_labels);
}

// GT contour red, prediction contour blue, on top of the source image.
io::ImageU8 contour_overlay(const io::ImageU8& base, const Tensor& pred_mask,
                            const Tensor* gt_mask) {
  io::ImageU8 out;
  out.width = base.width;
  out.height = base.height;
  out.channels = 3;
  out.pixels.resize(static_cast<std::size_t>(base.width) * base.height * 3);
  for (int y = 0; y < base.height; ++y)
    for (int x = 0; x < base.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = base.at(y, x, base.channels == 1 ? 0 : c);
  auto is_contour = [&](const Tensor& m, int y, int x) {
    const double v = m.data[static_cast<std::size_t>(y) * m.dim(1) + x];
    if (v == 0.0) return false;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= m.dim(0) || nx < 0 || nx >= m.dim(1)) return true;
        if (m.data[static_cast<std::size_t>(ny) * m.dim(1) + nx] == 0.0) return true;
      }
    return false;
  };
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      if (gt_mask && is_contour(*gt_mask, y, x)) {
        out.at(y, x, 0) = 255;
        out.at(y, x, 1) = 0;
        out.at(y, x, 2) = 0;
      }
      if (is_contour(pred_mask, y, x)) {
        out.at(y, x, 0) = 0;
        out.at(y, x, 1) = 0;
        out.at(y, x, 2) = 255;
      }
    }
  return out;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, bool synthetic,
              const std::string& out_dir) {
  config::RunConfig cfg = load_or_default(config_path);
  fs::create_directories(out_dir);
  const fs::path run(out_dir);
  write_text(run / "config.txt", config::serialize_config(cfg));

  std::vector<data::Sample> dataset;
  if (synthetic) {
    dataset = data::generate_synthetic(cfg.synthetic);
  } else {
    if (data_dir.empty()) throw ParameterError("train: need --data or --synthetic");
    dataset = load_data_dir(data_dir, cfg.model.input_size);
  }
  if (dataset.empty()) throw DataError("train: dataset is empty");

  model::AdNet net(cfg.model);
  cfg.train.checkpoint_path = (run / "checkpoint.adn1").string();
  training::Trainer trainer(net, std::move(dataset), cfg.train, cfg.loss);
  trainer.train();
  trainer.write_log_csv((run / "training_log.csv").string());
  std::ostringstream manifest;
  manifest << "# checkpoint sidecar\nseed=" << cfg.train.seed << "\n"
           << config::serialize_config(cfg);
  write_text(run / "checkpoint.manifest.txt", manifest.str());
  std::cout << "trained " << trainer.log().size() << " epochs, best val loss "
            << trainer.best_val_loss() << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_dir, const std::string& out_dir) {
  config::RunConfig cfg = load_or_default(config_path);
  model::AdNet net(cfg.model);
  load_checkpoint(checkpoint, net.params());
  const auto samples = load_data_dir(data_dir, cfg.model.input_size);
  if (samples.empty()) throw DataError("eval: dataset is empty");
  auto report = evaluate_samples(net, samples);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  evaluation::write_metrics_csv((out / "metrics.csv").string(), report);
  if (report.roc_valid) {
    evaluation::write_roc_csv((out / "roc.csv").string(), report.roc);
    evaluation::write_roc_svg((out / "roc.svg").string(), report.roc);
  }
  std::cout << "mean jaccard " << report.mean.jaccard << ", mean dice " << report.mean.dice;
  if (report.roc_valid) std::cout << ", auc " << report.roc.auc;
  std::cout << "\n";
  return 0;
}

int cmd_predict(const std::string& config_path, const std::string& checkpoint,
                const std::string& image_path, const std::string& mask_path,
                const std::string& out_dir) {
  config::RunConfig cfg = load_or_default(config_path);
  model::AdNet net(cfg.model);
  load_checkpoint(checkpoint, net.params());

  const io::ImageU8 raw = io::read_image(image_path);
  const int S = cfg.model.input_size;
  Tensor img = data::resize_nearest(data::image_to_tensor(raw), S, S);
  Tensor batch({1, S, S, 3});
  batch.data = img.data;
  Tape tape;
  NodeId x = tape.constant(std::move(batch), "input");
  auto fwd = net.forward(tape, x, model::Mode::Infer);
  const Tensor& out = tape.value(fwd.final_out);

  // back to the source resolution; mask binarized first so it stays binary
  Tensor prob({S, S, 1});
  prob.data = out.data;
  Tensor mask({S, S, 1});
  for (std::size_t i = 0; i < prob.size(); ++i) mask.data[i] = prob.data[i] >= 0.5 ? 1.0 : 0.0;
  prob = data::resize_nearest(prob, raw.height, raw.width);
  mask = data::resize_nearest(mask, raw.height, raw.width);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  io::write_png((dir / (stem + "_prob.png")).string(), data::tensor_to_gray_image(prob));
  io::write_png((dir / (stem + "_mask.png")).string(), data::tensor_to_gray_image(mask));

  Tensor gt;
  const bool have_gt = !mask_path.empty();
  if (have_gt) {
    gt = data::mask_to_tensor(io::read_png(mask_path));
    if (gt.dim(0) != raw.height || gt.dim(1) != raw.width)
      gt = data::resize_nearest(gt, raw.height, raw.width);
  }
  io::write_png((dir / (stem + "_overlay.png")).string(),
                contour_overlay(raw, mask, have_gt ? &gt : nullptr));
  std::cout << "wrote " << stem << "_prob.png, " << stem << "_mask.png, " << stem
            << "_overlay.png\n";
  return 0;
}

int cmd_inspect(const std::string& config_path) {
  config::RunConfig cfg = load_or_default(config_path);
  model::AdNet net(cfg.model);
  const int S = cfg.model.input_size;
  Tape tape;
  NodeId x = tape.constant(Tensor::zeros({1, S, S, cfg.model.input_channels}), "input");
  auto [skips, bottleneck_in] = net.encoder_forward(tape, x, model::Mode::Infer);
  std::cout << "input            [1x" << S << "x" << S << "x" << cfg.model.input_channels << "]\n";
  for (std::size_t i = 0; i < skips.size(); ++i)
    std::cout << "encoder stage " << i + 1 << "  " << tape.value(skips[i]).shape_str() << "\n";
  std::cout << "bottleneck in    " << tape.value(bottleneck_in).shape_str() << "\n";
  auto fwd = net.forward(tape, x, model::Mode::Infer);
  std::cout << "final            " << tape.value(fwd.final_out).shape_str() << "\n";
  for (std::size_t i = 0; i < fwd.guided.size(); ++i)
    std::cout << "guided head " << i + 1 << "    " << tape.value(fwd.guided[i]).shape_str() << "\n";
  std::cout << "parameter_count  " << net.parameter_count() << "\n";
  return 0;
}

// Paired Wilcoxon on the per-image jaccard columns of two metrics CSVs.
int cmd_stats(const std::string& path_a, const std::string& path_b) {
  auto read_jaccard = [](const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("stats: cannot open " + path);
    std::map<std::string, double> rows;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      const auto c1 = line.find(',');
      if (c1 == std::string::npos) continue;
      const std::string id = line.substr(0, c1);
      if (id == "mean" || id == "stddev") continue;
      const auto c2 = line.find(',', c1 + 1);
      rows[id] = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    }
    return rows;
  };
  const auto a = read_jaccard(path_a);
  const auto b = read_jaccard(path_b);
  std::vector<double> va, vb;
  for (const auto& [id, val] : a) {
    const auto it = b.find(id);
    if (it != b.end()) {
      va.push_back(val);
      vb.push_back(it->second);
    }
  }
  if (va.empty()) throw DataError("stats: no paired ids between the two files");
  const auto res = evaluation::wilcoxon_signed_rank(va, vb);
  std::cout << "n=" << res.n_effective << " W=" << res.w << " p=" << res.p_value << " ("
            << (res.exact ? "exact" : "normal approximation") << ")\n";
  std::cout << (res.significant_at_5pct ? "significant at the 5% level"
                                        : "not significant at the 5% level")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AD-Net segmentation engine"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir = "run", checkpoint, image_path, mask_path;
  std::string stats_a, stats_b;
  bool synthetic = false;

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "key=value config file");
  train->add_option("--data", data_dir, "dataset dir with images/ and masks/");
  train->add_flag("--synthetic", synthetic, "use the synthetic ellipse dataset");
  train->add_option("--out", out_dir, "run directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path, "key=value config file");
  eval->add_option("--checkpoint", checkpoint, "weights file")->required();
  eval->add_option("--data", data_dir, "dataset dir with images/ and masks/")->required();
  eval->add_option("--out", out_dir, "output directory");

  auto* predict = app.add_subcommand("predict", "segment one image");
  predict->add_option("--config", config_path, "key=value config file");
  predict->add_option("--checkpoint", checkpoint, "weights file")->required();
  predict->add_option("--image", image_path, "input image (PNG or JPEG)")->required();
  predict->add_option("--mask", mask_path, "optional ground-truth mask PNG");
  predict->add_option("--out", out_dir, "output directory");

  auto* inspect = app.add_subcommand("inspect", "print shape trace and parameter count");
  inspect->add_option("--config", config_path, "key=value config file");

  auto* stats = app.add_subcommand("stats", "paired Wilcoxon test on two metrics CSVs");
  stats->add_option("--a", stats_a, "first metrics CSV")->required();
  stats->add_option("--b", stats_b, "second metrics CSV")->required();

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(train)) return cmd_train(config_path, data_dir, synthetic, out_dir);
    if (app.got_subcommand(eval)) return cmd_eval(config_path, checkpoint, data_dir, out_dir);
    if (app.got_subcommand(predict))
      return cmd_predict(config_path, checkpoint, image_path, mask_path, out_dir);
    if (app.got_subcommand(inspect)) return cmd_inspect(config_path);
    if (app.got_subcommand(stats)) return cmd_stats(stats_a, stats_b);
  } catch (const CLI::ParseError& e) {
    // fold CLI11's assorted parse-error codes into the documented usage code
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
