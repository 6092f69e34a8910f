#include "caai/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "caai/checkpoint.hpp"
#include "caai/config.hpp"
#include "caai/gradcheck.hpp"
#include "caai/image_io.hpp"
#include "caai/metrics.hpp"
#include "caai/synthetic.hpp"

namespace caai::cli {

namespace fs = std::filesystem;

namespace {

struct ValidationError : Error {
  using Error::Error;
};

[[noreturn]] void invalid(const std::string& msg) { throw ValidationError(msg); }

template <typename T>
DatasetT<T> load_dataset(const DatasetLayout& layout, const TrainConfig& cfg, bool want_gt) {
  const auto stems = list_stems(layout, want_gt);
  DatasetT<T> data(stems.size());
  const int size = cfg.model.backbone.input_size;
  for (size_t i = 0; i < stems.size(); ++i) {
    const auto s = load_sample(stems[i], layout, size, want_gt);
    data[i].stem = stems[i];
    data[i].rgb = planes_to_tensor<T>(s.rgb, 3, size);
    if (cfg.model.depth_channels == 3) {
      std::vector<double> rep;
      rep.reserve(3 * s.depth.size());
      for (int c = 0; c < 3; ++c) rep.insert(rep.end(), s.depth.begin(), s.depth.end());
      data[i].depth = planes_to_tensor<T>(rep, 3, size);
    } else {
      data[i].depth = planes_to_tensor<T>(s.depth, 1, size);
    }
    if (want_gt) data[i].gt = planes_to_tensor<T>(s.gt, 1, size);
  }
  return data;
}

template <typename T>
void run_training(const TrainConfig& cfg, const std::string& data_dir,
                  const std::string& out_path, const std::string& resume_path) {
  std::unique_ptr<TrainerT<T>> trainer;
  if (!resume_path.empty()) {
    trainer = load_checkpoint<T>(resume_path);
    std::printf("resumed from '%s' at epoch %d\n", resume_path.c_str(),
                trainer->epochs_done());
  } else {
    trainer = std::make_unique<TrainerT<T>>(cfg);
  }
  const auto data = load_dataset<T>(DatasetLayout{data_dir}, trainer->config(), true);
  std::printf("training on %zu samples, %lld parameters\n", data.size(),
              static_cast<long long>(trainer->model().params().total_params()));
  trainer->train(data, {}, /*log_to_stdout=*/true);
  save_checkpoint(out_path, *trainer);
  std::printf("checkpoint written to '%s'\n", out_path.c_str());
}

template <typename T>
void run_inference(const std::string& ckpt_path, const std::string& data_dir,
                   const std::string& out_dir) {
  auto trainer = load_checkpoint<T>(ckpt_path);
  const auto& model = trainer->model();
  const int size = model.config().backbone.input_size;
  const DatasetLayout layout{data_dir};
  const auto stems = list_stems(layout, /*require_gt=*/false);
  fs::create_directories(out_dir);

  for (const auto& stem : stems) {
    const auto s = load_sample(stem, layout, size, /*want_gt=*/false);
    std::vector<const TensorT<T>*> rgb_parts, depth_parts;
    auto rgb = planes_to_tensor<T>(s.rgb, 3, size);
    TensorT<T> depth;
    if (model.config().depth_channels == 3) {
      std::vector<double> rep;
      for (int c = 0; c < 3; ++c) rep.insert(rep.end(), s.depth.begin(), s.depth.end());
      depth = planes_to_tensor<T>(rep, 3, size);
    } else {
      depth = planes_to_tensor<T>(s.depth, 1, size);
    }
    auto pred = model.forward(stack_samples<T>({&rgb}), stack_samples<T>({&depth}));

    std::vector<double> map(static_cast<size_t>(size) * size);
    auto pd = pred.data();
    for (size_t i = 0; i < map.size(); ++i) map[i] = static_cast<double>(pd[i]);
    map = bilinear_resize_plane(map, size, size, s.orig_width, s.orig_height);

    Image img;
    img.width = s.orig_width;
    img.height = s.orig_height;
    img.channels = 1;
    img.data = std::move(map);
    write_png8(out_dir + "/" + stem + ".png", img);
  }
  std::printf("wrote %zu saliency maps to '%s'\n", stems.size(), out_dir.c_str());
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"caai: two-stream RGB-D saliency detection with complementary attention "
               "and adaptive feature integration"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on an RGB/depth/GT dataset");
  std::string train_config, train_data, train_out, train_resume;
  train_cmd->add_option("--config", train_config, "key=value training configuration file");
  train_cmd->add_option("--data", train_data, "dataset root (RGB/, depth/, GT/)")->required();
  train_cmd->add_option("--out", train_out, "output checkpoint path")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint to continue from");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "write saliency maps for a dataset");
  std::string infer_ckpt, infer_data, infer_out;
  infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
  infer_cmd->add_option("--data", infer_data, "dataset root (RGB/, depth/)")->required();
  infer_cmd->add_option("--out", infer_out, "output directory for 8-bit PNG maps")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate predictions against ground truth");
  std::string eval_pred, eval_gt, eval_csv;
  eval_cmd->add_option("--pred", eval_pred, "directory of predicted maps")->required();
  eval_cmd->add_option("--gt", eval_gt, "directory of ground-truth maps")->required();
  eval_cmd->add_option("--csv", eval_csv, "output CSV path")->required();

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset");
  std::string gen_spec, gen_out;
  int gen_n = 0;
  std::uint64_t gen_seed = 1;
  gen_cmd->add_option("--spec", gen_spec, "key=value synthetic-data recipe (optional)");
  gen_cmd->add_option("--n", gen_n, "number of samples")->required();
  gen_cmd->add_option("--seed", gen_seed, "generation seed");
  gen_cmd->add_option("--out", gen_out, "output dataset root")->required();

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite");
  std::uint64_t grad_seed = 1;
  grad_cmd->add_option("--seed", grad_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg;  // desk-scale defaults
      if (!train_config.empty()) cfg = train_config_from_file(train_config);
      if (train_resume.empty() && !fs::is_directory(train_data)) {
        invalid("'" + train_data + "' is not a directory");
      }
      try {
        if (cfg.precision == 64) {
          run_training<double>(cfg, train_data, train_out, train_resume);
        } else {
          run_training<float>(cfg, train_data, train_out, train_resume);
        }
      } catch (const ValidationError&) {
        throw;
      } catch (const Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
      }
      return 0;
    }

    if (*infer_cmd) {
      if (!fs::exists(infer_ckpt)) invalid("checkpoint '" + infer_ckpt + "' does not exist");
      const auto info = peek_checkpoint(infer_ckpt);
      try {
        if (info.precision == 64) {
          run_inference<double>(infer_ckpt, infer_data, infer_out);
        } else {
          run_inference<float>(infer_ckpt, infer_data, infer_out);
        }
      } catch (const Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
      }
      return 0;
    }

    if (*eval_cmd) {
      if (!fs::is_directory(eval_pred)) invalid("'" + eval_pred + "' is not a directory");
      if (!fs::is_directory(eval_gt)) invalid("'" + eval_gt + "' is not a directory");
      try {
        const auto report = metrics::evaluate_dataset(eval_pred, eval_gt);
        metrics::write_csv(report, eval_csv);
        std::cout << metrics::format_table(report);
      } catch (const Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
      }
      return 0;
    }

    if (*gen_cmd) {
      SyntheticSpec spec;
      if (!gen_spec.empty()) spec = synthetic_spec_from_file(gen_spec);
      if (gen_n < 1) invalid("--n must be >= 1");
      try {
        generate_synthetic(spec, gen_n, gen_seed, gen_out);
      } catch (const Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
      }
      std::printf("wrote %d samples to '%s'\n", gen_n, gen_out.c_str());
      return 0;
    }

    if (*grad_cmd) {
      bool all_pass = true;
      try {
        for (const auto& result : gradcheck::run_all(grad_seed)) {
          const bool pass = result.passed();
          all_pass = all_pass && pass;
          std::printf("%-14s max_rel_err=%.3e  checked=%d  skipped=%d  %s\n",
                      result.module.c_str(), result.stats.max_rel_err, result.stats.checked,
                      result.stats.skipped_non_smooth, pass ? "PASS" : "FAIL");
        }
      } catch (const Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
      }
      return all_pass ? 0 : 2;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace caai::cli
