// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: acceptance [work_dir [criterion...]]
// Criterion 5 reuses the data criterion 4 synthesizes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fcqc/codecs.hpp"
#include "fcqc/evaluation.hpp"
#include "fcqc/geometry.hpp"
#include "fcqc/io.hpp"
#include "fcqc/labels.hpp"
#include "fcqc/metrics.hpp"
#include "fcqc/nn.hpp"
#include "fcqc/regressor.hpp"
#include "fcqc/synth.hpp"
#include "support/corpus.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace fcqc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;
int g_workers = 1;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool rel_close(double got, double want, double rel) {
  if (got == want) return true;
  return std::abs(got - want) <= rel * std::abs(want);
}

// 1. Metric oracles.
Outcome metric_oracles() {
  std::mt19937_64 rng(101);
  int bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int w = 11 + int(rng() % 54), h = 11 + int(rng() % 54);
    const auto a = oracle::random_image(rng, w, h);
    const auto b = oracle::perturb(a, rng, 1 + int(rng() % 128));
    const double pairs[3][2] = {{mse(a, b), oracle::mse(a, b)},
                                {psnr(a, b), oracle::psnr(a, b)},
                                {ssim_unclamped(a, b), oracle::ssim(a, b)}};
    for (const auto& p : pairs) {
      if (!rel_close(p[0], p[1], 1e-9)) ++bad;
      if (p[1] != 0) worst = std::max(worst, std::abs(p[0] - p[1]) / std::abs(p[1]));
    }
  }
  // Images too small for the SSIM window still exercise mse/psnr.
  for (int i = 0; i < 200; ++i) {
    const int w = 1 + int(rng() % 10), h = 1 + int(rng() % 64);
    const auto a = oracle::random_image(rng, w, h);
    const auto b = oracle::perturb(a, rng, 1 + int(rng() % 60));
    if (!rel_close(mse(a, b), oracle::mse(a, b), 1e-9) || !rel_close(psnr(a, b), oracle::psnr(a, b), 1e-9)) ++bad;
  }
  const auto img = oracle::random_image(rng, 40, 40);
  const bool cap = psnr(img, img) == 100.0 && psnr(img, img, 60.0) == 60.0;
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const ImageBuffer zero(32, 32, 0), white(32, 32, 255);
  const double closed = c1 / (255.0 * 255.0 + c1);
  const bool constant = std::abs(ssim(zero, white) - closed) <= 1e-9;
  return {bad == 0 && cap && constant,
          fmt("1200 images, mismatches=%d, worst rel=%.2e, cap=%s, constant ssim=%.12f", bad, worst,
              cap ? "ok" : "wrong", ssim(zero, white))};
}

std::vector<double> draw_scores(std::mt19937_64& rng, std::size_t n, double shift) {
  std::normal_distribution<double> d(shift, 1.0);
  std::vector<double> v(n);
  // Coarse rounding forces ties.
  const bool coarse = rng() % 2 == 0;
  for (auto& x : v) x = coarse ? std::round(d(rng) * 4) / 4 : d(rng);
  return v;
}

// 2. Evaluation oracles.
Outcome evaluation_oracles() {
  std::mt19937_64 rng(202);
  int bad = 0, spearman_checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nu = 1 + rng() % 250, nc = 1 + rng() % 250;
    const auto u = draw_scores(rng, nu, 1.0), c = draw_scores(rng, nc, 0.0);
    const auto got = det_curve(u, c);
    const auto want = oracle::det(u, c);
    if (got.size() != want.size()) {
      ++bad;
      continue;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].threshold != want[i].threshold) ++bad;
      if (std::lround(got[i].fpr * double(nu)) != std::lround(want[i].fpr * double(nu))) ++bad;
      if (std::lround(got[i].fnr * double(nc)) != std::lround(want[i].fnr * double(nc))) ++bad;
      if (std::abs(got[i].fpr - want[i].fpr) > 1e-12 || std::abs(got[i].fnr - want[i].fnr) > 1e-12) ++bad;
    }
    const auto e = eer(u, c);
    const auto we = oracle::eer(u, c);
    if (std::abs(e.eer - (we.fpr + we.fnr) / 2) > 1e-12) ++bad;
    for (double th : {e.threshold, u[0], c[0]}) {
      if (std::abs(f1_at(th, u, c) - oracle::f1(th, u, c)) > 1e-12) ++bad;
    }
    std::vector<double> x(u.begin(), u.end()), y(nu);
    std::uniform_int_distribution<int> level(0, 10);
    for (auto& v : y) v = level(rng);
    const bool varied = std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) != x.end() &&
                        std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) != y.end();
    if (varied) {
      ++spearman_checked;
      if (std::abs(spearman(x, y) - oracle::spearman(x, y)) > 1e-12) ++bad;
    }
  }
  return {bad == 0 && spearman_checked > 150,
          fmt("200 trials, mismatches=%d, spearman trials=%d", bad, spearman_checked)};
}

// 3. Similarity fit recovery.
Outcome geometry_recovery() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> log_s(std::log(0.2), std::log(5.0));
  std::uniform_real_distribution<double> theta(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), coord(-300.0, 300.0);
  int bad = 0, reflections = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    SimilarityTransform t;
    t.scale = std::exp(log_s(rng));
    t.rotation = theta(rng);
    if (t.rotation == -std::numbers::pi) t.rotation = std::numbers::pi;
    double tx, ty;
    do {
      tx = 100 * unit(rng);
      ty = 100 * unit(rng);
    } while (tx * tx + ty * ty > 100.0 * 100.0);
    t.tx = tx;
    t.ty = ty;
    const std::size_t n = 2 + rng() % 6;
    std::vector<Point2> src(n), dst(n);
    for (std::size_t k = 0; k < n; ++k) {
      src[k] = {coord(rng), coord(rng)};
      dst[k] = t.apply(src[k]);
    }
    const auto fit = fit_similarity(src, dst);
    if (!(fit.scale > 0)) ++reflections;
    double dr = std::remainder(fit.rotation - t.rotation, 2 * std::numbers::pi);
    const double err = std::max({std::abs(fit.scale - t.scale) / t.scale, std::abs(dr), std::abs(fit.tx - t.tx),
                                 std::abs(fit.ty - t.ty)});
    worst = std::max(worst, err);
    if (err >= 1e-6) ++bad;
  }
  return {bad == 0 && reflections == 0,
          fmt("1000 trials, failures=%d, reflections=%d, worst error=%.2e", bad, reflections, worst)};
}

fs::path g_test_dir;  // output of criterion 4, reused by 5

// 4. Plan shape and determinism.
Outcome synthesis_protocol() {
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.push_back(fmt("src%03d", i));
  int bad_shape = 0;
  for (const auto& p : plan_training(ids, 17)) {
    const auto compressed = std::count_if(p.recipes.begin(), p.recipes.end(),
                                          [](const auto& r) { return r.compression.has_value(); });
    if (compressed != 117 || p.recipes.size() != 119) ++bad_shape;
  }

  const fs::path dir = g_work / "protocol";
  const auto csv = oracle::write_face_corpus(dir / "corpus", 400, 404, 256, g_workers);
  const auto sources = sources_from_landmarks(csv);
  std::vector<std::string> sids;
  for (const auto& s : sources) sids.push_back(s.source_id);
  const auto plan = plan_test(sids, TestProtocol::Rotated, 404);
  SynthesisOptions opt;
  opt.plan_kind = PlanKind::TestRotated;
  opt.seed = 404;
  opt.workers = 1;
  const auto one = run_synthesis(sources, plan, dir / "w1", opt);
  opt.workers = 4;
  (void)run_synthesis(sources, plan, dir / "w4", opt);
  const bool identical = read_text(dir / "w1/manifest.csv") == read_text(dir / "w4/manifest.csv") &&
                         read_text(dir / "w1/manifest.meta") == read_text(dir / "w4/manifest.meta");
  int uncompressed = 0, jpeg = 0, jp2 = 0, failed = 0;
  for (const auto& r : one.records) {
    if (!r.error.empty()) ++failed;
    else if (!r.recipe.compression) ++uncompressed;
    else if (r.recipe.compression->codec == Codec::Jpeg) ++jpeg;
    else ++jp2;
  }
  g_test_dir = dir / "w1";
  return {bad_shape == 0 && uncompressed == 800 && jpeg == 800 && jp2 == 800 && failed == 0 && identical,
          fmt("training plan 117+2 on %d/50 sources; test plan %d/%d/%d (failed %d); manifests %s across 1 and 4 "
              "workers",
              50 - bad_shape, uncompressed, jpeg, jp2, failed, identical ? "identical" : "DIFFER")};
}

// 5. Label rules, on the criterion 4 output.
Outcome label_rules() {
  if (g_test_dir.empty()) return {false, "no synthesized data (criterion 4 did not run)"};
  const auto manifest = read_manifest(g_test_dir / "manifest.csv");
  const auto res = build_labels(manifest, g_test_dir, LabelKind::Psnr, g_workers);
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.sample_id] = &r;

  int bad_unc = 0, bad_order = 0, bad_value = 0;
  std::vector<std::pair<double, double>> comp;  // (psnr, label)
  double lo = 2, hi = -1;
  for (const auto& s : res.samples) {
    const auto& rec = *by_id.at(s.sample_id);
    if (!rec.recipe.compression) {
      bad_unc += s.label != 1.0;
      continue;
    }
    comp.emplace_back(s.metric, s.label);
    lo = std::min(lo, s.label);
    hi = std::max(hi, s.label);
  }
  std::sort(comp.begin(), comp.end());
  for (std::size_t i = 1; i < comp.size(); ++i) {
    if (comp[i].second < comp[i - 1].second) ++bad_order;
    if (comp[i].first > comp[i - 1].first && !(comp[i].second > comp[i - 1].second)) ++bad_order;
  }
  // Independent PSNR for a spread of samples.
  const double pmin = res.config.psnr_min, pmax = res.config.psnr_max;
  int checked = 0;
  for (std::size_t i = 0; i < res.samples.size(); i += 37) {
    const auto& s = res.samples[i];
    const auto& rec = *by_id.at(s.sample_id);
    if (!rec.recipe.compression) continue;
    const double p = oracle::psnr(read_image(g_test_dir / rec.reference_path), read_image(g_test_dir / rec.output_path));
    ++checked;
    if (!rel_close(s.metric, p, 1e-9) || std::abs(s.label - (p - pmin) / (pmax - pmin)) > 1e-9) ++bad_value;
  }
  const bool pass = bad_unc == 0 && bad_order == 0 && bad_value == 0 && lo == 0.0 && hi == 1.0 && checked > 20;
  return {pass, fmt("%zu labels, uncompressed!=1: %d, compressed range [%g, %g], order violations %d, "
                    "psnr recomputed on %d with %d mismatches",
                    res.samples.size(), bad_unc, lo, hi, bad_order, checked, bad_value)};
}

// 6. Desk-scale end to end.
struct DeskSettings {
  int sources = 240;
  int source_size = 512;
  int resolution = 192;
  int epochs = 12;
  int batch = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 606;
};

Outcome desk_end_to_end() {
  const DeskSettings cfg;
  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  const fs::path dir = g_work / "desk";
  const auto csv = oracle::write_face_corpus(dir / "corpus", cfg.sources, cfg.seed, cfg.source_size, g_workers);
  const auto sources = sources_from_landmarks(csv);
  std::vector<std::string> ids;
  for (const auto& s : sources) ids.push_back(s.source_id);

  TrainingPlanConfig plan_cfg;
  plan_cfg.grid = {{{Codec::Jpeg, EncoderId::B, quality_range(20, 100, 10)},
                    {Codec::Jpeg2000, EncoderId::B, quality_range(20, 100, 10)}}};
  const auto plan = plan_training(ids, cfg.seed, plan_cfg);
  SynthesisOptions opt;
  opt.seed = cfg.seed;
  opt.workers = g_workers;
  const auto manifest = run_synthesis(sources, plan, dir / "data", opt);
  const double t_synth = elapsed();

  const auto labels = build_labels(manifest, dir / "data", LabelKind::Psnr, g_workers);
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.sample_id] = &r;
  std::vector<LabeledRecord> labeled;
  for (const auto& s : labels.samples) labeled.push_back({*by_id.at(s.sample_id), s.label, s.kind});
  const auto set = load_training_set(labeled, dir / "data", cfg.resolution, g_workers);

  Hyperparams hp;
  hp.epochs = cfg.epochs;
  hp.batch_size = cfg.batch;
  hp.learning_rate = cfg.learning_rate;
  hp.input_resolution = cfg.resolution;
  hp.train_fraction = 0.8;
  const auto result = train(set, hp, cfg.seed);
  const double t_train = elapsed();

  // The same split train() used; its validation part is the held-out test split.
  const auto split = split_by_source(set, hp.train_fraction, cfg.seed);
  std::set<std::string> train_sources;
  for (auto i : split.train) train_sources.insert(set.examples[i].source_id);
  bool disjoint = true;
  const Predictor predictor(result.model);
  std::vector<double> raw, quality, uncompressed, heavy;
  std::set<std::string> test_sources;
  for (auto i : split.validation) {
    const auto& ex = set.examples[i];
    disjoint = disjoint && !train_sources.contains(ex.source_id);
    test_sources.insert(ex.source_id);
    const double r = predictor.predict_tensor(ex.tensor);
    const auto& c = by_id.at(ex.sample_id)->recipe.compression;
    const int q = c ? c->quality : 100;
    raw.push_back(r);
    quality.push_back(q);
    if (!c) uncompressed.push_back(r);
    else if (q <= 40) heavy.push_back(r);
  }
  const double rho = spearman(raw, quality);
  const double e = eer(uncompressed, heavy).eer;
  const double seconds = elapsed();
  const bool pass = disjoint && rho >= 0.7 && e <= 0.15 && seconds <= 1800;
  return {pass, fmt("%d sources, %zu train / %zu test samples (%zu test sources, disjoint=%s); spearman=%.4f "
                    "(>=0.7), eer(q<=40)=%.2f%% (<=15%%); synth %.0fs, train done %.0fs, total %.0fs",
                    cfg.sources, split.train.size(), split.validation.size(), test_sources.size(),
                    disjoint ? "yes" : "no", rho, 100 * e, t_synth, t_train, seconds)};
}

// 7. EDC.
Outcome edc_correctness() {
  const QualityMap toy_q{{"p1", 10}, {"p2", 20}, {"p3", 30}, {"p4", 40}, {"ref", 100}};
  const std::vector<ComparisonRecord> toy = {
      {"p1", "ref", 0.1}, {"p2", "ref", 0.9}, {"p3", "ref", 0.1}, {"p4", "ref", 0.9}};
  const std::vector<double> toy_grid = {0.0, 0.25, 0.5, 0.75};
  const auto t = edc_curve(toy_q, toy, 0.5, toy_grid);
  // Keeping pairs 1..4, 2..4, 3..4, 4: fails are p1 and p3.
  const bool toy_ok = t.size() == 4 && t[0].fnmr == 2.0 / 4 && t[1].fnmr == 1.0 / 3 && t[2].fnmr == 1.0 / 2 &&
                      t[3].fnmr == 0.0;

  const int n = 2000;
  const double start = 0.10;
  QualityMap q{{"ref", 100}};
  std::vector<ComparisonRecord> cmp;
  std::vector<double> sims;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> low(0.0, 0.3), high(0.5, 1.0);
  std::uniform_int_distribution<int> good(20, 100);
  for (int i = 0; i < n; ++i) {
    const std::string id = fmt("s%04d", i);
    const bool failing = i < n / 10;
    q[id] = failing ? int(rng() % 10) : good(rng);
    cmp.push_back({id, "ref", failing ? low(rng) : high(rng)});
    sims.push_back(cmp.back().similarity);
  }
  std::shuffle(cmp.begin(), cmp.end(), rng);
  const double threshold = fnmr_threshold(sims, start);
  const auto grid = default_discard_grid();
  const auto curve = edc_curve(q, cmp, threshold, grid);
  bool reaches_zero = true, positive_before = true;
  for (const auto& p : curve) {
    if (p.discard_fraction >= 0.10 - 1e-12) reaches_zero = reaches_zero && p.fnmr == 0.0;
    else positive_before = positive_before && p.fnmr > 0.0;
  }
  const bool start_ok = std::abs(curve[0].fnmr - start) <= 1.0 / n;
  return {toy_ok && start_ok && reaches_zero && positive_before,
          fmt("toy %s; N=%d fnmr(0)=%.4f (target %.2f), zero from 10%% discard: %s", toy_ok ? "exact" : "WRONG", n,
              curve[0].fnmr, start, reaches_zero && positive_before ? "yes" : "no")};
}

// 8. Gradient check.
Outcome gradient_check() {
  using Net = nn::CompactNet<double>;
  Net net(32);
  net.initialize(808);
  std::mt19937_64 rng(809);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::vector<double>> xs(4, std::vector<double>(net.input_size()));
  for (auto& x : xs)
    for (auto& v : x) v = n01(rng);
  const std::vector<double> ts = {0.15, 0.85, 0.4, 0.65};
  Net::Scratch scratch;
  const auto loss = [&] {
    double sum = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = net.forward(xs[i].data(), scratch, nullptr) - ts[i];
      sum += d * d;
    }
    return sum / double(xs.size());
  };
  std::vector<double> grad(net.parameters().size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Net::Trace trace;
    const double y = net.forward(xs[i].data(), scratch, &trace);
    net.backward(trace, 2.0 * (y - ts[i]) / double(xs.size()), grad, scratch, false);
  }
  std::vector<std::size_t> probe;
  for (const auto& t : net.layout()) {
    const std::size_t step = std::max<std::size_t>(1, t.size() / 150);
    for (std::size_t k = 0; k < t.size(); k += step) probe.push_back(t.offset + k);
  }
  auto params = net.parameters();
  const double h = 1e-6;
  int bad = 0;
  double worst = 0;
  for (std::size_t p : probe) {
    const double saved = params[p];
    params[p] = saved + h;
    const double up = loss();
    params[p] = saved - h;
    const double down = loss();
    params[p] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max(std::abs(numeric), std::abs(grad[p]));
    const double diff = std::abs(numeric - grad[p]);
    if (scale > 1e-9) worst = std::max(worst, diff / scale);
    if (diff > 1e-3 * scale + 1e-9) ++bad;
  }
  return {bad == 0, fmt("%zu parameters over %zu tensors, failures=%d, worst rel=%.2e", probe.size(),
                        net.layout().size(), bad, worst)};
}

// 9. Artifact round trip and quality map.
Outcome artifact_round_trip() {
  std::mt19937_64 rng(909);
  std::vector<LabeledImage> images;
  for (int i = 0; i < 24; ++i) {
    images.push_back({fmt("a%02d", i), fmt("s%02d", i / 3), double(i % 7) / 6.0,
                      oracle::smooth_image(rng, kRegressorInputSize, kRegressorInputSize)});
  }
  const auto set = make_training_set(images, 32);
  Hyperparams hp;
  hp.epochs = 2;
  hp.batch_size = 8;
  hp.input_resolution = 32;
  auto model = train(set, hp, 910).model;
  std::vector<double> raws;
  for (const auto& ex : set.examples) raws.push_back(Predictor(model).predict_tensor(ex.tensor));
  model.sigmoid = calibrate_sigmoid(raws);
  const fs::path dir = g_work / "artifact";
  save_model(dir, model);
  const auto back = load_model(dir);
  int differ = 0;
  for (int i = 0; i < 20; ++i) {
    const auto img = i % 2 ? oracle::random_image(rng, kRegressorInputSize, kRegressorInputSize)
                          : oracle::smooth_image(rng, kRegressorInputSize, kRegressorInputSize);
    const double a = predict_raw(model, img), b = predict_raw(back, img);
    differ += std::memcmp(&a, &b, sizeof a) != 0;
  }
  const bool same_meta = back.weights == model.weights && back.sigmoid == model.sigmoid &&
                         back.channel_mean == model.channel_mean && back.channel_std == model.channel_std;

  const auto& s = *back.sigmoid;
  int prev = -1, breaks = 0, lo = 101, hi = -1;
  for (int i = 0; i <= 10000; ++i) {
    const double raw = s.midpoint + s.width * (-20.0 + 40.0 * i / 10000.0);
    const int v = map_quality(raw, s);
    if (v < prev || v < 0 || v > 100) ++breaks;
    prev = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {differ == 0 && same_meta && breaks == 0 && lo == 0 && hi == 100,
          fmt("20 predictions, %d differ; metadata %s; 10001-point sweep %d..%d with %d violations", differ,
              same_meta ? "equal" : "DIFFERENT", lo, hi, breaks)};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fcqc_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  g_workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric oracles", metric_oracles},
      {"evaluation oracles", evaluation_oracles},
      {"similarity recovery", geometry_recovery},
      {"synthesis protocol and determinism", synthesis_protocol},
      {"label rules", label_rules},
      {"desk-scale end to end", desk_end_to_end},
      {"EDC correctness", edc_correctness},
      {"gradient check", gradient_check},
      {"artifact round trip and quality map", artifact_round_trip},
  };
  std::set<std::size_t> only;
  for (int a = 2; a < argc; ++a) only.insert(std::stoul(argv[a]));
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !out.pass;
    std::printf("criterion %zu %s: %s (%s) [%.1fs]\n", i + 1, criteria[i].first, out.pass ? "PASS" : "FAIL",
                out.detail.c_str(), s);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
