// svid command-line driver: synth, shapes, train, denoise, eval, ablate,
// gradcheck, hist.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "svid/checkpoint.hpp"
#include "svid/config.hpp"
#include "svid/dataset.hpp"
#include "svid/gradcheck_suite.hpp"
#include "svid/image_io.hpp"
#include "svid/metrics.hpp"
#include "svid/noise.hpp"
#include "svid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace svid;

namespace {

enum Exit { ok = 0, validation = 1, numerical = 2, io = 3 };

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void write_manifest(const fs::path& dir, const std::string& command, json body) {
  body["command"] = command;
  body["format"] = 1;
  write_text(dir / "manifest.json", body.dump(2) + "\n");
}

json config_json(const RunConfig& c) {
  json j;
  for (const auto& k : RunConfig::keys()) j[k] = c.get(k);
  return j;
}

/// Config file (optional) with flag overrides replacing its lines, validated together.
RunConfig resolve_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  std::string text;
  if (!path.empty()) {
    const auto bytes = read_file(path);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    for (std::string line; std::getline(in, line);) {
      std::string key = line.substr(0, std::min(line.find('='), line.find('#')));
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t\r") + 1);
      // Blank out (keep numbering) lines whose key a flag overrides.
      text += (overrides.count(key) ? std::string() : line) + "\n";
    }
  }
  for (const auto& [k, v] : overrides) text += k + " = " + v + "\n";
  return RunConfig::parse(text);
}

void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& overrides) {
  for (const auto& key : RunConfig::keys())
    cmd->add_option_function<std::string>(
        "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; }, "override config key " + key);
}

int run_train(const RunConfig& c, const fs::path& out, const std::optional<fs::path>& resume,
              std::optional<std::uint64_t> stop_at, bool quiet) {
  fs::create_directories(out);
  write_text(out / "config.txt", c.to_text());
  write_manifest(out, "train", {{"config", config_json(c)}});
  const auto data = load_train_data(c);
  TrainOptions opt;
  opt.out_dir = out;
  opt.checkpoint_every = c.checkpoint_every;
  opt.precision = c.checkpoint_precision;
  opt.stop_at = stop_at;
  if (resume) opt.resume = load_checkpoint(*resume);
  if (!quiet)
    opt.on_eval = [&](const EvalSnapshot& s) {
      std::fprintf(stderr, "[%s] step %llu  psnr %.3f  ssim %.4f  var_ratio %.3f  tv %.4f\n",
                   to_string(c.train.mode).c_str(), static_cast<unsigned long long>(s.step), s.psnr_mean, s.ssim_mean,
                   s.variance_ratio, s.tv_nhat_n);
    };
  train(data, c.unet, c.train, c.noise, opt);
  return ok;
}

std::vector<fs::path> require_images(const fs::path& dir) {
  auto files = list_images(dir);
  if (files.empty()) throw IoError("no PGM/PPM/PNG images in " + dir.string());
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-verification image denoising"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  // synth
  auto* synth = app.add_subcommand("synth", "corrupt every image in a directory");
  std::string synth_in, synth_out, synth_noise = "gaussian", synth_level;
  std::uint64_t synth_seed = 0;
  synth->add_option("--in", synth_in, "clean image directory")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--noise", synth_noise, "gaussian | speckle | poisson");
  synth->add_option("--level", synth_level, "level v or range lo:hi (gaussian on the 0-255 scale)")->required();
  synth->add_option("--seed", synth_seed, "noise seed");

  // shapes
  auto* shapes = app.add_subcommand("shapes", "write synthetic piecewise-smooth test images");
  std::string shapes_out;
  int shapes_count = 30, shapes_size = 64;
  std::uint64_t shapes_seed = 0;
  shapes->add_option("--out", shapes_out, "output directory")->required();
  shapes->add_option("--count", shapes_count, "number of images");
  shapes->add_option("--size", shapes_size, "side length in pixels");
  shapes->add_option("--seed", shapes_seed, "generator seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a denoiser");
  std::string train_config, train_out, train_resume;
  std::optional<std::uint64_t> train_stop;
  std::map<std::string, std::string> train_overrides;
  train_cmd->add_option("--config", train_config, "RunConfig file (key = value lines)");
  train_cmd->add_option("--out", train_out, "run directory")->required();
  train_cmd->add_option("--resume", train_resume, "checkpoint to continue from");
  train_cmd->add_option("--stop-at", train_stop, "stop after this many total steps");
  add_config_flags(train_cmd, train_overrides);

  // denoise
  auto* denoise = app.add_subcommand("denoise", "apply a trained checkpoint");
  std::string dn_ckpt, dn_in, dn_out;
  denoise->add_option("--ckpt", dn_ckpt, "checkpoint file")->required();
  denoise->add_option("--in", dn_in, "noisy image directory")->required();
  denoise->add_option("--out", dn_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM between matching files of two directories");
  std::vector<std::string> eval_pairs;
  std::string eval_report, eval_csv;
  eval->add_option("--pairs", eval_pairs, "cleanDir otherDir")->required()->expected(2);
  eval->add_option("--report", eval_report, "JSON report path (stdout when omitted)");
  eval->add_option("--csv", eval_csv, "per-image CSV path");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "paired svid / svid_no_stopgrad runs");
  std::string ab_config, ab_out;
  std::map<std::string, std::string> ab_overrides;
  ablate->add_option("--config", ab_config, "RunConfig file");
  ablate->add_option("--out", ab_out, "run directory")->required();
  add_config_flags(ablate, ab_overrides);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 0;
  gradcheck->add_option("--seed", gc_seed, "seed for shapes and values");

  // hist
  auto* hist = app.add_subcommand("hist", "histograms of n, n_hat and n2 on a clean image set");
  std::string h_ckpt, h_data, h_out, h_noise = "gaussian", h_level = "25";
  std::uint64_t h_seed = 0;
  int h_bins = 101;
  double h_range = 0.5, h_mask_p = 0.5;
  hist->add_option("--ckpt", h_ckpt, "checkpoint file")->required();
  hist->add_option("--data", h_data, "clean image directory")->required();
  hist->add_option("--out", h_out, "CSV path")->required();
  hist->add_option("--noise", h_noise, "gaussian | speckle | poisson");
  hist->add_option("--level", h_level, "noise level");
  hist->add_option("--seed", h_seed, "noise and mask seed");
  hist->add_option("--bins", h_bins, "bin count");
  hist->add_option("--range", h_range, "bins cover [-range, range]");
  hist->add_option("--mask-p", h_mask_p, "probability of +1 in the mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : validation;
  }

  try {
    if (*synth) {
      const auto spec = NoiseSpec::parse(parse_noise_kind(synth_noise), synth_level, synth_seed);
      spec.validate();
      const auto files = require_images(synth_in);
      fs::create_directories(synth_out);
      json images = json::array();
      for (std::size_t i = 0; i < files.size(); ++i) {
        const auto img = load_image(files[i]);
        Rng rng = make_stream(synth_seed, Stream::synth, i);
        const double level = spec.sample_level(rng);
        const ImageBuffer noisy(img.width, img.height, img.channels, add_noise(img.pixels, spec.kind, level, rng));
        save_image(noisy, fs::path(synth_out) / files[i].filename());
        images.push_back({{"name", files[i].filename().string()}, {"level", level}});
      }
      write_manifest(synth_out, "synth",
                     {{"noise", synth_noise}, {"level", synth_level}, {"seed", synth_seed}, {"images", images}});
      return ok;
    }
    if (*shapes) {
      fs::create_directories(shapes_out);
      const auto images = shapes_dataset(shapes_count, shapes_size, shapes_seed);
      for (std::size_t i = 0; i < images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "shape_%04zu.pgm", i);
        save_image(images[i], fs::path(shapes_out) / name);
      }
      write_manifest(shapes_out, "shapes", {{"count", shapes_count}, {"size", shapes_size}, {"seed", shapes_seed}});
      return ok;
    }
    if (*train_cmd) {
      const auto c = resolve_config(train_config, train_overrides);
      std::optional<fs::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      return run_train(c, train_out, resume, train_stop, quiet);
    }
    if (*denoise) {
      const Network net = load_checkpoint(dn_ckpt).restore();
      const auto files = require_images(dn_in);
      fs::create_directories(dn_out);
      for (const auto& f : files) save_image(denoise_image(net, load_image(f)), fs::path(dn_out) / f.filename());
      write_manifest(dn_out, "denoise", {{"ckpt", dn_ckpt}, {"in", dn_in}, {"n_images", files.size()}});
      return ok;
    }
    if (*eval) {
      const auto clean_files = require_images(eval_pairs[0]);
      std::vector<ImageBuffer> clean, other;
      std::vector<std::string> names;
      for (const auto& f : clean_files) {
        const auto match = fs::path(eval_pairs[1]) / f.filename();
        if (!fs::exists(match)) throw IoError("no counterpart for " + f.filename().string() + " in " + eval_pairs[1]);
        clean.push_back(load_image(f));
        other.push_back(load_image(match));
        names.push_back(f.filename().string());
      }
      const auto report = evaluate_pairs(clean, other, names);
      if (eval_report.empty()) std::cout << report.to_json() << "\n";
      else write_text(eval_report, report.to_json() + "\n");
      if (!eval_csv.empty()) {
        std::ostringstream os;
        report.write_csv(os);
        write_text(eval_csv, os.str());
      }
      return ok;
    }
    if (*ablate) {
      auto c = resolve_config(ab_config, ab_overrides);
      fs::create_directories(ab_out);
      std::map<std::string, std::vector<EvalSnapshot>> traces;
      for (auto mode : {TrainMode::svid, TrainMode::svid_no_stopgrad}) {
        c.train.mode = mode;
        const fs::path dir = fs::path(ab_out) / to_string(mode);
        run_train(c, dir, std::nullopt, std::nullopt, quiet);
      }
      // Paired variance trace from the two eval logs.
      std::ifstream a(fs::path(ab_out) / "svid" / "eval.csv"), b(fs::path(ab_out) / "svid_no_stopgrad" / "eval.csv");
      std::string la, lb, trace = "step,variance_ratio_svid,variance_ratio_no_stopgrad,psnr_svid,psnr_no_stopgrad\n";
      std::getline(a, la);
      std::getline(b, lb);
      while (std::getline(a, la) && std::getline(b, lb)) {
        auto split = [](const std::string& s) {
          std::vector<std::string> f;
          std::istringstream in(s);
          for (std::string x; std::getline(in, x, ',');) f.push_back(x);
          return f;
        };
        const auto fa = split(la), fb = split(lb);
        trace += fa[0] + "," + fa[3] + "," + fb[3] + "," + fa[1] + "," + fb[1] + "\n";
      }
      write_text(fs::path(ab_out) / "variance_trace.csv", trace);
      write_manifest(ab_out, "ablate", {{"config", config_json(c)}, {"runs", {"svid", "svid_no_stopgrad"}}});
      return ok;
    }
    if (*gradcheck) {
      bool all = true;
      for (const auto& c : run_gradcheck_suite(gc_seed)) {
        std::printf("%-32s %s  tol %.0e  %s\n", c.name.c_str(), c.passed() ? "PASS" : "FAIL", c.tolerance,
                    c.report.summary().c_str());
        all = all && c.passed();
      }
      return all ? ok : numerical;
    }
    if (*hist) {
      const Network net = load_checkpoint(h_ckpt).restore();
      const auto spec = NoiseSpec::parse(parse_noise_kind(h_noise), h_level, h_seed);
      spec.validate();
      const auto clean = load_images(require_images(h_data));
      const auto noisy = corrupt_for_eval(clean, spec);
      const auto h = residual_histograms(net, clean, noisy, h_bins, h_range, h_mask_p, h_seed);
      std::ostringstream os;
      os << "bin_lo,bin_hi,n,n_hat,n2\n";
      os.precision(10);
      for (std::size_t i = 0; i < h.n.bins(); ++i)
        os << h.n.edges[i] << ',' << h.n.edges[i + 1] << ',' << h.n.counts[i] << ',' << h.n_hat.counts[i] << ','
           << h.n2.counts[i] << '\n';
      write_text(h_out, os.str());
      const json tv = {{"tv_n_hat_n", histogram_distance(h.n_hat, h.n)},
                       {"tv_n2_n", histogram_distance(h.n2, h.n)},
                       {"tv_n2_n_hat", histogram_distance(h.n2, h.n_hat)},
                       {"n_samples", h.n.total},
                       {"settings",
                        {{"ckpt", h_ckpt},
                         {"data", h_data},
                         {"noise", h_noise},
                         {"level", h_level},
                         {"seed", h_seed},
                         {"bins", h_bins},
                         {"range", h_range},
                         {"mask_p", h_mask_p}}}};
      write_text(h_out + ".tv.json", tv.dump(2) + "\n");
      std::cout << tv.dump(2) << "\n";
      return ok;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return validation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return numerical;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return validation;
  }
  return ok;
}
