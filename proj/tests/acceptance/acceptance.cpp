// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqdiff/data/kfold.hpp"
#include "seqdiff/data/synthetic.hpp"
#include "seqdiff/eval/metrics.hpp"
#include "seqdiff/preprocess/color_constancy.hpp"
#include "seqdiff/preprocess/difference.hpp"
#include "seqdiff/train/schedule.hpp"
#include "seqdiff/train/trainer.hpp"
#include "seqdiff/twostream/fusion.hpp"
#include "seqdiff/twostream/model.hpp"
#include "seqdiff/viz/heatmap.hpp"
#include "support/batches.hpp"
#include "support/eval_oracles.hpp"
#include "support/gradcheck.hpp"
#include "support/op_suite.hpp"
#include "support/viz_fixtures.hpp"

namespace {

using namespace seqdiff;
namespace fs = std::filesystem;

/// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += !ok;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = notes_;
    if (!ok()) {
      s += (s.empty() ? "" : "; ") + std::to_string(failed_) + "/" + std::to_string(count_) + " checks failed:";
      for (const auto& f : failures_) s += " [" + f + "]";
    } else {
      s += (s.empty() ? "" : "; ") + std::to_string(count_) + " checks";
    }
    return s;
  }

 private:
  std::size_t count_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
  std::string notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void gradient_integrity(Check& c) {
  Rng rng(2024);
  double worst = 0;
  std::size_t ops = 0;
  for (const auto& [name, make] : testing::op_cases()) {
    ++ops;
    for (std::size_t k = 0; k < 5; ++k) {
      auto oc = make(rng, k);
      const auto r = testing::gradcheck(oc.fn, oc.inputs, rng.next_u64(), 1e-3);
      worst = std::max(worst, r.max_rel_error);
      c.expect(r.max_rel_error < 1e-4, name + " variant " + std::to_string(k) + " rel " + fmt("%.3g", r.max_rel_error));
    }
  }
  c.note(std::to_string(ops) + " ops x 5 shapes, max rel error " + fmt("%.3g", worst));
}

void auc_oracle(Check& c) {
  Rng rng(13);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing::random_scored_set(rng);
    const double err = std::fabs(eval::roc_auc(s) - testing::pairwise_auc(s));
    worst = std::max(worst, err);
    c.expect(err <= 1e-12, "set " + std::to_string(trial));
  }
  c.note("100 tied score sets, max |diff| " + fmt("%.3g", worst));
}

void equation_contracts(Check& c) {
  using V = std::vector<double>;
  using twostream::fused_probability;
  using twostream::sigmoid;
  using twostream::spatial_probability;
  using twostream::temporal_probability;

  c.expect(spatial_probability(V{0, 0, 0, 0}) == 0.5, "spatial all-zero logits");
  c.expect(std::fabs(spatial_probability(V{1, 3}) - 0.880797) <= 1e-6, "spatial mean logit 2");
  c.expect(temporal_probability(V{0}) == 0.5, "temporal single zero");
  c.expect(temporal_probability(V{2, -2}) == 0.5, "temporal cancelling logits");
  c.expect(std::fabs(temporal_probability(V{1, 2, 3}) - 0.880797) <= 1e-6, "temporal mean logit 2");
  c.expect(fused_probability(0, 0) == 0.5, "fusion at zero");
  c.expect(std::fabs(fused_probability(2, 0) - 0.731059) <= 1e-6, "fusion (2, 0)");
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5);
    c.expect(fused_probability(a, b) == sigmoid((a + b) / 2), "fusion random pair");
  }

  for (int trial = 0; trial < 20; ++trial) {
    ImageF32 a(3, 4, 5), b(3, 4, 5);
    for (auto& v : a.data) v = static_cast<float>(rng.uniform());
    for (auto& v : b.data) v = static_cast<float>(rng.uniform());
    const auto ab = preprocess::difference(a, b), ba = preprocess::difference(b, a);
    bool anti = true;
    for (std::size_t i = 0; i < ab.size(); ++i) anti &= ab.data[i] == -ba.data[i];
    c.expect(anti, "pixel difference antisymmetry");
    bool zero = true;
    const auto same = preprocess::pixel_difference({a, a});
    for (float v : same[0].data) zero &= v == 0.0f;
    c.expect(zero, "pixel difference of identical images");
  }

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor<double>> a{testing::random_tensor({2, 3, 4, 4}, rng), testing::random_tensor({2, 5, 2, 2}, rng)};
    std::vector<Tensor<double>> b{testing::random_tensor({2, 3, 4, 4}, rng), testing::random_tensor({2, 5, 2, 2}, rng)};
    Graph<double> g(Graph<double>::Mode::inference);
    const auto ab = twostream::feature_difference(g, a, b), ba = twostream::feature_difference(g, b, a);
    const auto aa = twostream::feature_difference(g, a, a);
    bool oracle = true, anti = true, zero = true;
    for (std::size_t l = 0; l < a.size(); ++l)
      for (std::size_t i = 0; i < a[l].size(); ++i) {
        oracle &= ab[l][i] == b[l][i] - a[l][i];
        anti &= ab[l][i] == -ba[l][i];
        zero &= aa[l][i] == 0.0;
      }
    c.expect(oracle, "feature difference loop oracle");
    c.expect(anti, "feature difference antisymmetry");
    c.expect(zero, "feature difference of identical pyramids");
  }
}

std::array<double, 3> minkowski_means(const std::vector<double>& chw, std::size_t plane, double p) {
  std::array<double, 3> out{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += std::pow(chw[ch * plane + i], p);
    out[ch] = std::pow(acc / static_cast<double>(plane), 1.0 / p);
  }
  return out;
}

void gray_world(Check& c) {
  Rng rng(21);
  double worst = 0;
  for (double p : {1.0, 6.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      ImageF32 img(3, 9, 7);
      for (auto& v : img.data) v = static_cast<float>(rng.uniform());
      const auto est = preprocess::estimate_gray_world(img, p);
      const auto m = minkowski_means(preprocess::apply_gains_unclamped(img, est.gains), img.plane(), p);
      const double spread = std::max({m[0], m[1], m[2]}) - std::min({m[0], m[1], m[2]});
      worst = std::max(worst, spread);
      c.expect(spread <= 1e-6, "p=" + fmt("%g", p) + " image " + std::to_string(trial));
    }
  }
  ImageF32 img(3, 2, 2);
  const float means[3] = {0.2f, 0.4f, 0.6f};
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < 4; ++i) img.data[ch * 4 + i] = means[ch];
  const auto est = preprocess::estimate_gray_world(img, 1.0);
  const double want[3] = {2.0, 1.0, 2.0 / 3.0};
  for (std::size_t ch = 0; ch < 3; ++ch) c.expect(std::fabs(est.gains[ch] - want[ch]) <= 1e-7, "hand example gain");
  c.note("max corrected-mean spread " + fmt("%.3g", worst));
}

double temporal_grad_into_spatial_backbone(bool inject) {
  Rng rng(22), data(23), drop(24);
  twostream::TwoStreamConfig cfg{BackboneConfig::desk(), {}};
  if (!inject) cfg.inject.assign(4, false);
  twostream::TwoStreamModel<double> model(cfg, rng);
  auto batch = testing::random_batch<double>(2, 3, 16, data);
  Graph<double> g;
  nn::Context ctx{true, &drop};
  auto out = model.forward(g, batch, ctx);
  g.backward(twostream::combined_loss(g, out, batch.labels, twostream::LossWeights{0, 1, 0}));
  ParamRefs<double> refs;
  model.collect(refs);
  double s = 0;
  for (auto& [name, t] : refs.params) {
    if (name.rfind("spatial.backbone.", 0) != 0 || !t.has_grad()) continue;
    for (double v : t.grad()) s += v * v;
  }
  return std::sqrt(s);
}

void injection_dichotomy(Check& c) {
  const double on = temporal_grad_into_spatial_backbone(true);
  const double off = temporal_grad_into_spatial_backbone(false);
  c.expect(on > 0.0, "injection enabled gives nonzero gradient");
  c.expect(off == 0.0, "injection disabled gives exactly zero gradient");
  c.note("grad norm enabled " + fmt("%.4g", on) + ", disabled " + fmt("%.4g", off));
}

void directional_reproduction(Check& c) {
  data::SyntheticConfig sc;
  sc.seed = 7;
  const auto ds = data::synth_generate(sc).sequences;
  std::vector<int> labels;
  for (const auto& s : ds) labels.push_back(s.label);
  const auto split = data::stratified_holdout(iota(ds.size()), labels, 1.0 / 3.0, 99);
  c.expect(split.train.size() == 200 && split.test.size() == 100, "200 train / 100 test");

  auto run = [&](train::ModelKind kind) {
    train::TrainConfig cfg;
    cfg.kind = kind;
    cfg.max_epochs = 30;
    cfg.seed = 3;
    const auto t0 = std::chrono::steady_clock::now();
    const auto fo = train::train_and_test(cfg, ds, split.train, split.test, 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::pair{fo.result.auc, secs};
  };
  const auto [two, t_two] = run(train::ModelKind::two_stream);
  const auto [single, t_single] = run(train::ModelKind::single_img);
  c.expect(two >= 0.85, "two-stream AUC " + fmt("%.4f", two) + " >= 0.85");
  c.expect(single <= 0.65, "single-image AUC " + fmt("%.4f", single) + " <= 0.65");
  c.expect(two - single >= 0.15, "gap " + fmt("%.4f", two - single) + " >= 0.15");
  c.note("two-stream AUC " + fmt("%.4f", two) + " (" + fmt("%.0f", t_two) + " s), single-image AUC " +
         fmt("%.4f", single) + " (" + fmt("%.0f", t_single) + " s)");
}

void threshold_metrics(Check& c) {
  eval::ScoredSet ex{{0.9, 0.4, 0.6, 0.3}, {1, 1, 0, 0}};
  const auto m = eval::optimal_threshold_metrics(ex);
  c.expect(std::fabs(m.threshold - 0.35) <= 1e-15, "threshold 0.35");
  c.expect(m.sensitivity == 1.0, "sensitivity 1");
  c.expect(m.specificity == 0.5, "specificity 0.5");
  c.expect(m.accuracy == 0.75, "accuracy 0.75");
  c.expect(std::fabs(m.precision - 2.0 / 3.0) <= 1e-15, "precision 2/3");

  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing::random_scored_set(rng);
    const auto best = eval::optimal_threshold_metrics(s);
    c.expect(best.youden() + 1e-15 >= testing::sweep_max_youden(s), "sweep optimality set " + std::to_string(trial));
  }
}

void protocol_plumbing(Check& c) {
  std::vector<int> labels(92, 0);
  labels.insert(labels.end(), 92, 1);
  Rng shuffle(11);
  shuffle.shuffle(labels);
  const auto folds = data::kfold_split(labels, 5, 3);
  std::vector<std::size_t> sizes;
  std::vector<int> seen(labels.size(), 0);
  for (const auto& f : folds) {
    sizes.push_back(f.test.size());
    std::size_t malignant = 0;
    std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (auto i : f.test) {
      ++seen[i];
      malignant += static_cast<std::size_t>(labels[i]);
      c.expect(!train.count(i), "patient in train and test");
    }
    c.expect(std::fabs(static_cast<double>(malignant) - 92.0 / 5.0) <= 1.0, "stratified within one");
  }
  std::sort(sizes.rbegin(), sizes.rend());
  c.expect(sizes == std::vector<std::size_t>{37, 37, 37, 37, 36}, "fold sizes 37,37,37,37,36");
  c.expect(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), "each patient tested once");

  train::PlateauSchedule sched(1e-3, 0.2, 10, 2);
  sched.start(1.0);
  std::vector<double> lrs;
  for (int e = 0; e < 100; ++e) {
    lrs.push_back(sched.lr());
    if (sched.observe(1.0) == train::PlateauSchedule::Event::stop) break;
  }
  c.expect(lrs.size() == 30, "stagnant run stops after 30 epochs");
  for (std::size_t e = 0; e < lrs.size(); ++e) {
    const double want = 1e-3 * std::pow(0.2, static_cast<double>(e / 10));
    c.expect(std::fabs(lrs[e] - want) <= 1e-15, "lr at epoch " + std::to_string(e + 1));
  }

  data::SyntheticConfig sc;
  sc.image_size = 16;
  sc.benign = sc.malignant = 20;
  sc.seed = 5;
  const auto ds = data::synth_generate(sc).sequences;
  train::TrainConfig cfg;
  cfg.image_size = 16;
  cfg.augment.out_size = 16;
  cfg.test_resize = 18;
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.seed = 1;
  const auto root = fs::temp_directory_path() / "seqdiff_acceptance_rerun";
  fs::remove_all(root);
  train::CrossValOptions opt;
  opt.k = 2;
  opt.split_seed = 4;
  opt.out_dir = root / "a";
  train::run_cross_validation(cfg, ds, opt);
  opt.out_dir = root / "b";
  train::run_cross_validation(cfg, ds, opt);
  const auto a = slurp(root / "a" / "metrics.json"), b = slurp(root / "b" / "metrics.json");
  c.expect(!a.empty() && a == b, "metrics.json byte-identical on rerun");
  fs::remove_all(root);
}

void visualization(Check& c) {
  Rng rng(2);
  twostream::TwoStreamModel<float> model(twostream::TwoStreamConfig{}, rng);

  data::SyntheticConfig sc;
  sc.benign = 1;
  sc.malignant = 0;
  const auto frame = data::synth_generate(sc).sequences[0].images[0];
  for (const auto& p : viz::visualize_sequence(model, {frame, frame})) {
    bool zero = true;
    for (const auto& h : p.raw)
      for (float v : h.data) zero &= v == 0.0f;
    for (const auto& h : p.heat)
      for (float v : h.data) zero &= v == 0.0f;
    c.expect(zero, "identical pair heat is exactly zero");
  }

  const auto pairs = testing::growth_pairs(6);
  double inside = 0, outside = 0;
  for (std::size_t p = 0; p < pairs.sequences.size(); ++p) {
    const auto v = viz::visualize_sequence(model, pairs.sequences[p].images);
    for (std::size_t stage : {0u, 1u}) {
      const auto m = testing::annulus_mass(v[0].heat[stage], pairs.geometry[p][0], pairs.geometry[p][1]);
      inside += m.inside;
      outside += m.outside;
      c.expect(m.inside > m.outside, "annulus mass, pair " + std::to_string(p) + " stage " + std::to_string(stage + 1));
    }
  }
  c.note("annulus heat " + fmt("%.1f", inside) + " inside vs " + fmt("%.1f", outside) + " outside (stages 1-2)");

  sc.length = 3;
  const auto seq = data::synth_generate(sc).sequences[0];
  const auto dir = fs::temp_directory_path() / "seqdiff_acceptance_viz";
  fs::remove_all(dir);
  const auto files = viz::write_visualizations(dir, seq.patient_id, viz::visualize_sequence(model, seq.images));
  std::size_t on_disk = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++on_disk;
  const std::size_t stages = model.config().backbone.stage_widths.size();
  c.expect(files.size() == 2 * (stages + 1) && on_disk == files.size(), "N=3 writes 2*(stages+1) files");
  fs::remove_all(dir);
}

}  // namespace

// Arguments, when given, select criteria by number.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"AUC oracle equivalence", auc_oracle},
      {"fusion and difference contracts", equation_contracts},
      {"gray-world post-condition", gray_world},
      {"injection gradient flow", injection_dichotomy},
      {"sequential beats single image", directional_reproduction},
      {"optimal-threshold metrics", threshold_metrics},
      {"protocol plumbing", protocol_plumbing},
      {"visualization contract", visualization},
  };
  std::set<std::size_t> selected;
  for (int a = 1; a < argc; ++a) {
    const long n = std::strtol(argv[a], nullptr, 10);
    if (n < 1 || n > static_cast<long>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu ...]\n", argv[0], criteria.size());
      return 2;
    }
    selected.insert(static_cast<std::size_t>(n));
  }
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    ++run;
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %zu %s (%.1f s): %s\n", c.ok() ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs,
                c.summary().c_str());
    std::fflush(stdout);
    failed += !c.ok();
  }
  std::printf("%d/%d criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
