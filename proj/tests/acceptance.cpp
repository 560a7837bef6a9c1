// Acceptance run: one PASS/FAIL line per criterion. Long-running training
// artifacts (logs, checkpoints, eval traces) land in --work.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "svid/checkpoint.hpp"
#include "svid/config.hpp"
#include "svid/dataset.hpp"
#include "svid/gradcheck_suite.hpp"
#include "svid/image_io.hpp"
#include "svid/metrics.hpp"
#include "svid/trainer.hpp"

using namespace svid;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr double kGradSuiteSeconds = 60.0;
constexpr double kFrozenCopyTol = 1e-12;
constexpr double kExpansionTol = 1e-9;
constexpr int kExpansionTriples = 1000;
constexpr int kMaskDraws = 10000;
// |y2 - f| is a rounded floating-point difference; equality is checked to a
// few units in the last place of the operands.
constexpr double kResidualUlps = 4.0;
constexpr double kGainOverNoisyDb = 4.0;
constexpr double kGapToN2nDb = 2.5;
constexpr double kSvidRunSeconds = 15 * 60.0;
constexpr double kCollapseRatio = 0.05;
constexpr double kRetainRatio = 0.5;
constexpr std::uint64_t kAblationSteps = 10000;
constexpr std::uint64_t kHistSteps[] = {1000, 5000, 20000};
constexpr double kDipGainDb = 2.0;
constexpr double kDipFallDb = 1.0;
constexpr std::uint64_t kDipIters = 1500;
constexpr std::uint64_t kDipSnapshotEvery = 10;
constexpr double kDipLr = 1e-4;
constexpr std::uint64_t kResumeSteps = 300;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

std::vector<std::vector<double>> grads(const Network& net) {
  std::vector<std::vector<double>> out;
  for (const auto& p : net.params()) out.emplace_back(p.value.grad().begin(), p.value.grad().end());
  return out;
}

struct Context {
  fs::path work;
  RunConfig desk;
  TrainData data;
  // Shared between criteria 5 and 7.
  std::optional<TrainResult> svid_run;
  double svid_seconds = 0.0;
};

TrainResult run(Context& ctx, const std::string& name, TrainConfig cfg, const std::string& label) {
  TrainOptions opt;
  opt.out_dir = ctx.work / name;
  opt.on_eval = [&](const EvalSnapshot& s) {
    std::fprintf(stderr, "  [%s] step %llu psnr %.3f var_ratio %.3f tv %.4f\n", label.c_str(),
                 static_cast<unsigned long long>(s.step), s.psnr_mean, s.variance_ratio, s.tv_nhat_n);
  };
  return train(ctx.data, ctx.desk.unet, cfg, ctx.desk.noise, opt);
}

const TrainResult& svid_run(Context& ctx) {
  if (!ctx.svid_run) {
    const auto t0 = std::chrono::steady_clock::now();
    ctx.svid_run = run(ctx, "svid", ctx.desk.train, "svid");
    ctx.svid_seconds = seconds_since(t0);
  }
  return *ctx.svid_run;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(0);
  const double secs = seconds_since(t0);
  double worst_prim = 0.0, worst_comp = 0.0;
  bool all = true;
  std::string failed;
  for (const auto& c : cases) {
    (c.tolerance == kCompositeTolerance ? worst_comp : worst_prim) =
        std::max(c.tolerance == kCompositeTolerance ? worst_comp : worst_prim, c.report.max_rel_error);
    if (!c.passed()) {
      all = false;
      failed += " " + c.name;
    }
  }
  return {all && secs < kGradSuiteSeconds,
          fmt("%zu cases, max rel err primitives %.2e (< %.0e), composite %.2e (< %.0e), %.1f s (< %.0f s)%s",
              cases.size(), worst_prim, kPrimitiveTolerance, worst_comp, kCompositeTolerance, secs, kGradSuiteSeconds,
              failed.empty() ? "" : ("; failed:" + failed).c_str())};
}

Outcome stop_gradient_semantics(Context& ctx) {
  Rng rng(21);
  Network net = Network::build(ctx.desk.unet);
  const auto y = random_tensor({1, 1, 32, 32}, rng);
  const auto m = sample_mask(y.shape(), 0.5, rng);

  backward(svid_loss(net, y, m));
  const auto g_svid = grads(net);
  net.zero_grad();
  Tensor eta;
  {
    NoGradGuard guard;
    eta = net.forward(y).detached_copy();
  }
  backward(mse(net.forward(degrade(eta, y, m)), eta));
  const auto g_frozen = grads(net);
  double diff = 0.0;
  for (std::size_t i = 0; i < g_svid.size(); ++i)
    for (std::size_t k = 0; k < g_svid[i].size(); ++k) diff = std::max(diff, std::abs(g_svid[i][k] - g_frozen[i][k]));

  // Route the target and y2 through a second network: it sits entirely behind stop_gradient.
  Network live = Network::build(ctx.desk.unet);
  auto prior_cfg = ctx.desk.unet;
  prior_cfg.seed += 1;
  Network prior = Network::build(prior_cfg);
  const Tensor target = stop_gradient(prior.forward(y));
  backward(mse(live.forward(degrade(target, y, m)), target));
  std::size_t nonzero = 0, total = 0;
  for (const auto& g : grads(prior))
    for (double v : g) nonzero += v != 0.0, ++total;

  return {diff <= kFrozenCopyTol && nonzero == 0,
          fmt("max |grad - frozen-copy grad| %.2e (<= %.0e); detached-branch nonzero grads %zu of %zu", diff,
              kFrozenCopyTol, nonzero, total)};
}

Outcome expansion_identity(Context&) {
  Rng rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 4096);
  double worst = 0.0;
  for (int t = 0; t < kExpansionTriples; ++t) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> a(n), b(n), y(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = u(rng), b[i] = u(rng), y[i] = u(rng);
    worst = std::max(worst, regularizer_expansion_check(a, b, y));
  }
  return {worst < kExpansionTol, fmt("%d triples, max residual %.2e (< %.0e)", kExpansionTriples, worst, kExpansionTol)};
}

Outcome degradation_properties(Context&) {
  Rng rng(41);
  const Shape shape{1, 1, 16, 16};
  const auto f = random_tensor(shape, rng), y = random_tensor(shape, rng);

  std::size_t bad_sign = 0;
  for (int k = 0; k < 100; ++k) {
    const auto mask = sample_mask(shape, 0.5, rng);
    for (double v : mask.values()) bad_sign += v != 1.0 && v != -1.0;
  }

  const auto y2_plus = degrade(f, y, Mask::constant(shape, 1.0));
  bool plus_identity = true;
  for (std::size_t i = 0; i < y.size(); ++i) plus_identity &= y2_plus[i] == y[i];

  const auto m = sample_mask(shape, 0.5, rng);
  const auto y2 = degrade(f, y, m);
  double worst_ulps = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double ulp = std::numeric_limits<double>::epsilon() * std::max(std::abs(f[i]), std::abs(y[i]));
    worst_ulps = std::max(worst_ulps, std::abs(std::abs(y2[i] - f[i]) - std::abs(y[i] - f[i])) / ulp);
  }

  std::vector<double> mean(f.size(), 0.0);
  for (int k = 0; k < kMaskDraws; ++k) {
    const auto s = degrade(f, y, sample_mask(shape, 0.5, rng));
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s[i] / kMaskDraws;
  }
  double worst_z = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double sigma = std::abs(y[i] - f[i]) / std::sqrt(double(kMaskDraws));
    worst_z = std::max(worst_z, std::abs(mean[i] - f[i]) / sigma);
  }
  return {bad_sign == 0 && plus_identity && worst_ulps <= kResidualUlps && worst_z <= 3.0,
          fmt("non +-1 mask entries %zu; y2==y under m=+1: %s; ||y2-f|-|y-f|| max %.1f ulp (<= %.0f); "
              "MC mean max |z| %.2f over %d masks (<= 3)",
              bad_sign, plus_identity ? "yes" : "no", worst_ulps, kResidualUlps, worst_z, kMaskDraws)};
}

Outcome desk_gaussian(Context& ctx) {
  const auto& svid = svid_run(ctx);
  double noisy = 0.0;
  for (std::size_t i = 0; i < ctx.data.test_clean.size(); ++i)
    noisy += psnr(ctx.data.test_clean[i], ctx.data.test_noisy[i]) / double(ctx.data.test_clean.size());
  auto n2n_cfg = ctx.desk.train;
  n2n_cfg.mode = TrainMode::noise2noise;
  n2n_cfg.warmup_steps = 0;
  const auto n2n = run(ctx, "noise2noise", n2n_cfg, "n2n");
  const double s = svid.evals.back().psnr_mean, n = n2n.evals.back().psnr_mean;
  const bool gain = s >= noisy + kGainOverNoisyDb, gap = s >= n - kGapToN2nDb, fast = ctx.svid_seconds < kSvidRunSeconds;
  return {gain && gap && fast,
          fmt("noisy %.2f dB, svid %.2f dB (need >= %.2f), n2n %.2f dB (svid need >= %.2f); svid run %.0f s (< %.0f s)",
              noisy, s, noisy + kGainOverNoisyDb, n, n - kGapToN2nDb, ctx.svid_seconds, kSvidRunSeconds)};
}

Outcome ablation(Context& ctx) {
  auto cfg = ctx.desk.train;
  cfg.total_steps = kAblationSteps;
  cfg.decay_start = 0;
  const auto with = run(ctx, "ablation/svid", cfg, "ablate svid");
  cfg.mode = TrainMode::svid_no_stopgrad;
  const auto without = run(ctx, "ablation/svid_no_stopgrad", cfg, "ablate no-stopgrad");
  const auto &a = with.evals.back(), &b = without.evals.back();
  return {b.variance_ratio < kCollapseRatio && a.variance_ratio >= kRetainRatio && a.psnr_mean > b.psnr_mean,
          fmt("variance ratio no-stopgrad %.4f (< %.2f), stopgrad %.3f (>= %.2f); psnr stopgrad %.2f vs no-stopgrad "
              "%.2f dB (must be higher)",
              b.variance_ratio, kCollapseRatio, a.variance_ratio, kRetainRatio, a.psnr_mean, b.psnr_mean)};
}

Outcome histogram_convergence(Context& ctx) {
  const auto& svid = svid_run(ctx);
  std::vector<double> tv;
  for (auto step : kHistSteps) {
    const auto it = std::find_if(svid.evals.begin(), svid.evals.end(), [&](const auto& e) { return e.step == step; });
    if (it == svid.evals.end()) return {false, fmt("no evaluation at step %llu", (unsigned long long)step)};
    tv.push_back(it->tv_nhat_n);
  }
  int inversions = 0;
  for (std::size_t i = 1; i < tv.size(); ++i) inversions += tv[i] >= tv[i - 1];
  const bool trend = tv.back() < tv.front();
  return {inversions <= 1 && trend,
          fmt("TV(n_hat, n) at 1k/5k/20k = %.4f / %.4f / %.4f; inversions %d (<= 1), last < first: %s", tv[0], tv[1],
              tv[2], inversions, trend ? "yes" : "no")};
}

Outcome dip_baseline(Context& ctx) {
  const auto& clean = ctx.data.test_clean.front();
  const auto& noisy = ctx.data.test_noisy.front();
  const double input = psnr(clean, noisy);
  const auto snaps = dip_overfit(clean, noisy, ctx.desk.unet, kDipIters, kDipSnapshotEvery, kDipLr);
  std::ofstream trace(ctx.work / "dip_trace.csv");
  trace << "step,psnr,fidelity\n";
  for (const auto& s : snaps) trace << s.step << ',' << s.psnr << ',' << s.fidelity << '\n';
  const auto peak = std::max_element(snaps.begin(), snaps.end(), [](auto& a, auto& b) { return a.psnr < b.psnr; });
  const bool interior = peak != snaps.begin() && peak + 1 != snaps.end();
  const double fall = peak->psnr - snaps.back().psnr;
  return {interior && peak->psnr >= input + kDipGainDb && fall >= kDipFallDb,
          fmt("input %.2f dB, peak %.2f dB at step %llu (need >= %.2f), final %.2f dB (fall %.2f >= %.1f)", input,
              peak->psnr, (unsigned long long)peak->step, input + kDipGainDb, snaps.back().psnr, fall, kDipFallDb)};
}

Outcome engineering(Context& ctx) {
  std::vector<std::string> broken;
  auto cfg = ctx.desk.train;
  cfg.total_steps = kResumeSteps;
  cfg.eval_every = 100;

  // Resume from an f64 checkpoint mid-run.
  const auto full = train(ctx.data, ctx.desk.unet, cfg, ctx.desk.noise);
  TrainOptions head_opt;
  head_opt.stop_at = kResumeSteps / 2 + 7;
  const auto head = train(ctx.data, ctx.desk.unet, cfg, ctx.desk.noise, head_opt);
  const auto path = ctx.work / "resume.svid";
  save_checkpoint(Checkpoint::capture(head.net, head.adam, cfg.seed, head.step), path, BlobPrecision::f64);
  TrainOptions tail_opt;
  tail_opt.resume = load_checkpoint(path);
  const auto tail = train(ctx.data, ctx.desk.unet, cfg, ctx.desk.noise, tail_opt);
  auto bytes = [&](const TrainResult& r) {
    return serialize_checkpoint(Checkpoint::capture(r.net, r.adam, cfg.seed, r.step), BlobPrecision::f64);
  };
  if (bytes(full) != bytes(tail)) broken.push_back("resume");

  // Whole-run reproducibility: checkpoint bytes and step log.
  const auto again = train(ctx.data, ctx.desk.unet, cfg, ctx.desk.noise);
  std::ostringstream la, lb;
  write_step_log(la, full.log);
  write_step_log(lb, again.log);
  if (bytes(full) != bytes(again) || la.str() != lb.str()) broken.push_back("reproducibility");

  // Codecs: 8 and 16 bit PNM, gray and color, PNG when available.
  Rng rng(91);
  std::uniform_int_distribution<int> l8(0, 255), l16(0, 65535);
  for (int channels : {1, 3}) {
    ImageBuffer a(17, 9, channels), b(17, 9, channels);
    for (auto& v : a.pixels) v = l8(rng) / 255.0;
    for (auto& v : b.pixels) v = l16(rng) / 65535.0;
    if (!(decode_pnm(encode_pnm(a)) == a) || !(decode_pnm(encode_pnm(b, 65535)) == b)) broken.push_back("pnm");
    if (png_supported() && !(decode_png(encode_png(a)) == a)) broken.push_back("png");
  }
  const auto ckpt = Checkpoint::capture(full.net, full.adam, cfg.seed, full.step);
  if (parse_checkpoint(serialize_checkpoint(ckpt, BlobPrecision::f64)).params != ckpt.params)
    broken.push_back("checkpoint");

  // Split determinism and disjointness.
  std::vector<fs::path> files;
  for (int i = 0; i < 40; ++i) files.emplace_back("f" + std::to_string(i));
  const auto s1 = split_files(files, 5, 0.8), s2 = split_files(files, 5, 0.8);
  std::set<fs::path> seen(s1.train.begin(), s1.train.end());
  bool disjoint = true;
  for (const auto& p : s1.test) disjoint &= seen.insert(p).second;
  if (s1.train != s2.train || s1.test != s2.test || !disjoint || seen.size() != files.size())
    broken.push_back("split");

  std::string detail = "resume (f64, stop at " + std::to_string(head.step) + " of " + std::to_string(kResumeSteps) +
                       "), reproducibility, pnm/png/checkpoint round-trips, split";
  if (!broken.empty()) {
    detail += "; broken:";
    for (const auto& b : broken) detail += " " + b;
  }
  return {broken.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work", config = SVID_DESK_CONFIG;
  std::vector<int> only;
  app.add_option("--work", work, "directory for run artifacts");
  app.add_option("--config", config, "desk-scale RunConfig");
  app.add_option("--only", only, "run a subset of criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = work;
  fs::create_directories(ctx.work);
  ctx.desk = RunConfig::load(config);
  ctx.data = load_train_data(ctx.desk);

  const std::vector<std::pair<const char*, std::function<Outcome(Context&)>>> criteria{
      {"gradient suite", gradient_suite},
      {"stop-gradient semantics", stop_gradient_semantics},
      {"regularizer expansion identity", expansion_identity},
      {"degradation properties", degradation_properties},
      {"desk-scale gaussian run", desk_gaussian},
      {"stop-gradient ablation", ablation},
      {"histogram convergence", histogram_convergence},
      {"dip baseline", dip_baseline},
      {"engineering", engineering},
  };
  int failures = 0;
  std::ostringstream summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    const auto line = fmt("criterion %d %s  %-32s %s  [%.0f s]", id, o.pass ? "PASS" : "FAIL", criteria[i].first,
                          o.detail.c_str(), seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    summary << line << "\n";
  }
  std::ofstream(ctx.work / "acceptance.txt") << summary.str();
  return failures ? 1 : 0;
}
