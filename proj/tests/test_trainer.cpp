#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "vgnet/checkpoint.hpp"
#include "vgnet/dataset.hpp"
#include "vgnet/gradcheck.hpp"
#include "vgnet/graphgen.hpp"
#include "vgnet/synth.hpp"
#include "vgnet/train.hpp"

using namespace vgnet;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

// Small planted-structure dataset with graphs, ready for training.
struct SynthFixture {
  SynthData data;
  std::vector<VirtualNode> nodes;
  VirtualGraphSet graphs;
  WindowedDataset ds;

  explicit SynthFixture(std::size_t slots, double noise = 0.3, std::uint64_t seed = 7) {
    SynthSpec spec;
    spec.slots = slots;
    spec.noise = noise;
    spec.seed = seed;
    data = synth_generate(spec);
    SplitRanges r = split(slots);
    auto stats = compute_stats(data.demand, r.train_begin, r.train_end);
    auto kept = discard_sparse(stats, 1.0);
    nodes = aggregate_regions(kept, 0.5, data.grid);
    graphs = build_graphs(nodes, &data.od, 0.34);
    ds = build_dataset(node_demand(nodes, data.demand), 12);
  }

  std::vector<Tensor> masks() const {
    return {adjacency_mask(graphs.adj_distance), adjacency_mask(graphs.adj_correlation),
            adjacency_mask(graphs.adj_mobility)};
  }

  ModelConfig config() const {
    ModelConfig cfg = ModelConfig::make(nodes.size(), 3, 6);
    cfg.input_len = 12;
    cfg.heads = 2;
    cfg.attn_dim = 8;
    return cfg;
  }
};

}  // namespace

TEST_CASE("split fractions") {
  SplitRanges r = split(100);
  REQUIRE(r.train_begin == 0);
  REQUIRE(r.train_end == 80);
  REQUIRE(r.val_begin == 80);
  REQUIRE(r.val_end == 90);
  REQUIRE(r.test_begin == 90);
  REQUIRE(r.test_end == 100);

  // five hourly months land the boundary at four months of training data
  SplitRanges m = split(3672);
  REQUIRE(m.train_end == 2937);
  REQUIRE(m.val_end == 3304);

  REQUIRE_THROWS(split(100, 0.5, 0.2, 0.2));      // doesn't sum to 1
  REQUIRE_THROWS(split(100, 1.0, 0.0, 0.0));      // zero fraction
  REQUIRE_THROWS(split(5, 0.8, 0.1, 0.1));        // empty val split
}

TEST_CASE("normalization from training rows only") {
  DemandTensor d;
  d.slots = 10;
  d.cells = 3;
  d.values.assign(30, 0.0);
  for (std::size_t t = 0; t < 10; ++t) {
    d.at(t, 0) = static_cast<double>(t);
    d.at(t, 1) = 5.0;                                   // constant node
    d.at(t, 2) = t < 8 ? static_cast<double>(t % 2) : 100.0;  // test rows are outliers
  }
  NormalizeResult nr = normalize(d, 0, 8);
  REQUIRE(nr.stats.mean[0] == Catch::Approx(3.5));
  REQUIRE(nr.stats.stddev[1] == 1.0);
  for (std::size_t t = 0; t < 10; ++t) REQUIRE(nr.demand.at(t, 1) == 0.0);
  // stats ignore the outlier rows past the training range
  REQUIRE(nr.stats.mean[2] == Catch::Approx(0.5));

  // round trip
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      REQUIRE(nr.stats.inverse(nr.demand.at(t, c), c) ==
              Catch::Approx(d.at(t, c)).margin(1e-12));

  // transformed training rows re-center exactly
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, sq = 0;
    for (std::size_t t = 0; t < 8; ++t) s += nr.demand.at(t, c);
    double mu = s / 8;
    for (std::size_t t = 0; t < 8; ++t) {
      double dx = nr.demand.at(t, c) - mu;
      sq += dx * dx;
    }
    REQUIRE(std::fabs(mu) < 1e-10);
    if (c == 0) REQUIRE(std::fabs(std::sqrt(sq / 8) - 1.0) < 1e-9);
  }
}

TEST_CASE("window construction") {
  DemandTensor d;
  d.slots = 100;
  d.cells = 2;
  d.values.resize(200);
  for (std::size_t t = 0; t < 100; ++t)
    for (std::size_t c = 0; c < 2; ++c) d.at(t, c) = static_cast<double>(t * 2 + c);

  auto w = make_windows(d, 0, 100, 12);
  REQUIRE(w.size() == 88);
  REQUIRE(w[0].x.size() == 24);
  REQUIRE(w[0].y.size() == 2);
  REQUIRE(w[0].y[0] == d.at(12, 0));
  // overlap consistency: y of sample k equals the last row of sample k+1's X
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    REQUIRE(w[k].y[0] == w[k + 1].x[11 * 2 + 0]);
    REQUIRE(w[k].y[1] == w[k + 1].x[11 * 2 + 1]);
  }

  auto one = make_windows(d, 0, 13, 12);
  REQUIRE(one.size() == 1);
  REQUIRE_THROWS(make_windows(d, 0, 12, 12));

  // windows never cross a split boundary
  SplitRanges r = split(100);
  auto val = make_windows(d, r.val_begin, r.val_end, 5);
  for (const auto& s : val) {
    REQUIRE(s.target_slot >= r.val_begin + 5);
    REQUIRE(s.target_slot < r.val_end);
  }
}

TEST_CASE("smooth l1 values and gradient") {
  Tensor zero_err = smooth_l1(Tensor::from({2}, {1.0, -2.0}), Tensor::from({2}, {1.0, -2.0}));
  REQUIRE(zero_err.item() == 0.0);

  REQUIRE(smooth_l1(Tensor::scalar(0.0), Tensor::scalar(0.5)).item() == Catch::Approx(0.125));
  REQUIRE(smooth_l1(Tensor::scalar(0.0), Tensor::scalar(3.0)).item() == Catch::Approx(2.5));
  REQUIRE(smooth_l1(Tensor::scalar(0.0), Tensor::scalar(-3.0)).item() == Catch::Approx(2.5));

  double lo = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(1.0 - 1e-9)).item();
  double hi = smooth_l1(Tensor::scalar(0.0), Tensor::scalar(1.0 + 1e-9)).item();
  REQUIRE(std::fabs(hi - lo) < 1e-8);

  REQUIRE_THROWS(smooth_l1(Tensor::zeros({2}), Tensor::zeros({3})));

  // analytic gradient: quadratic region d/dpred = -x/n, linear region ±1/n
  Tensor pred = Tensor::from({2}, {0.0, 0.0});
  Tensor target = Tensor::from({2}, {0.5, 3.0});
  pred.set_requires_grad(true);
  Tensor loss = smooth_l1(pred, target);
  backward(loss);
  REQUIRE(pred.grad()[0] == Catch::Approx(-0.25));  // -(0.5)/2
  REQUIRE(pred.grad()[1] == Catch::Approx(-0.5));   // -sign(3)/2

  Rng rng(70);
  Tensor p2 = Tensor::randn({3, 4}, rng, 2.0);
  Tensor t2 = Tensor::randn({3, 4}, rng, 2.0);
  auto res = grad_check([&]() { return smooth_l1(p2, t2); }, {{"pred", p2}, {"target", t2}});
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("synthetic generator structure") {
  SynthSpec clean;
  clean.slots = 96;
  clean.noise = 0.0;
  SynthData a = synth_generate(clean);
  REQUIRE(a.demand.cells == 36);
  REQUIRE(a.labels.size() == 36);
  // block labels: cells 0..2 and row below share label 0, cells 3..5 label 1
  REQUIRE(a.labels[0] == 0);
  REQUIRE(a.labels[2] == 0);
  REQUIRE(a.labels[3] == 1);
  REQUIRE(a.labels[6 * 3] == 2);       // row 3 starts the lower blocks
  REQUIRE(a.labels[6 * 3 + 3] == 3);

  auto series = [&](const DemandTensor& d, std::size_t c) {
    std::vector<double> s(d.slots);
    for (std::size_t t = 0; t < d.slots; ++t) s[t] = d.at(t, c);
    return s;
  };
  // noiseless: same-cluster cells are identical, so correlation is exactly 1
  REQUIRE(pearson(series(a.demand, 0), series(a.demand, 1)) == 1.0);
  REQUIRE(pearson(series(a.demand, 0), series(a.demand, 6 * 3)) < 0.5);

  SynthData b = synth_generate(clean);
  REQUIRE(a.demand.values == b.demand.values);
  REQUIRE(a.od.counts == b.od.counts);

  // OD flows concentrate inside clusters
  double intra = a.od.at(0, 1), inter = a.od.at(0, 35);
  REQUIRE(intra > 3 * inter);
}

TEST_CASE("aggregation recovers planted clusters") {
  SynthSpec spec;
  spec.slots = 480;
  spec.noise = 0.35;
  spec.seed = 11;
  SynthData d = synth_generate(spec);
  auto stats = compute_stats(d.demand, 0, d.demand.slots);
  auto kept = discard_sparse(stats, 1.0);
  REQUIRE(kept.size() == 36);  // every cell has mean demand well above 1
  auto nodes = aggregate_regions(kept, 0.5, d.grid);
  REQUIRE(nodes.size() >= 4);
  std::size_t pure = 0;
  for (const auto& node : nodes) {
    std::size_t l0 = d.labels[node.member_cells[0]];
    bool ok = true;
    for (std::size_t c : node.member_cells) ok = ok && d.labels[c] == l0;
    pure += ok ? 1 : 0;
  }
  REQUIRE(static_cast<double>(pure) >= 0.9 * static_cast<double>(nodes.size()));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(71);
  std::vector<std::pair<std::string, Tensor>> named;
  named.emplace_back("a", Tensor::randn({3, 4}, rng));
  named.emplace_back("b", Tensor::from({2}, {-0.0, 5e-324}));  // signed zero, denormal
  named.emplace_back("scalar", Tensor::scalar(1.0 / 3.0));
  auto path = temp_path("vgnet_ckpt_test.bin");
  save_checkpoint(path.string(), named);
  auto loaded = load_checkpoint(path.string());
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(loaded[i].first == named[i].first);
    REQUIRE(loaded[i].second.shape() == named[i].second.shape());
    for (std::size_t j = 0; j < named[i].second.size(); ++j) {
      double want = named[i].second.values()[j];
      double got = loaded[i].second.values()[j];
      REQUIRE(std::bit_cast<std::uint64_t>(want) == std::bit_cast<std::uint64_t>(got));
    }
  }

  Tensor dst = Tensor::zeros({3, 4});
  restore_into({{"a", dst}}, loaded);
  REQUIRE(dst.values() == named[0].second.values());
  REQUIRE_THROWS_WITH(restore_into({{"missing", dst}}, loaded), ContainsSubstring("missing"));
  Tensor wrong = Tensor::zeros({4, 3});
  REQUIRE_THROWS_WITH(restore_into({{"a", wrong}}, loaded), ContainsSubstring("shape mismatch"));
  REQUIRE_THROWS(load_checkpoint((temp_path("vgnet_ckpt_none.bin")).string()));
  std::filesystem::remove(path);
}

TEST_CASE("checkpointed model reproduces forward passes exactly") {
  SynthFixture fx(240);
  ModelConfig cfg = fx.config();
  Rng rng(72);
  Model m1(cfg, fx.masks(), rng);
  auto path = temp_path("vgnet_model_ckpt.bin");
  save_checkpoint(path.string(), m1.params().all_named());

  Rng other(999);
  Model m2(cfg, fx.masks(), other);  // different init, then restored
  restore_into(m2.params().all_named(), load_checkpoint(path.string()));

  Tensor x = Tensor::randn({2, 12, static_cast<std::size_t>(fx.nodes.size()), 1}, rng);
  REQUIRE(m1.forward(x, false).values() == m2.forward(x, false).values());
  std::filesystem::remove(path);
}

TEST_CASE("training: patience zero runs exactly one epoch") {
  SynthFixture fx(240);
  Rng mrng(73);
  Model model(fx.config(), fx.masks(), mrng);
  TrainConfig tc;
  tc.patience = 0;
  tc.max_epochs = 50;
  TrainResult res = train(model, fx.ds, tc);
  REQUIRE(res.history.size() == 1);
  REQUIRE(res.best_epoch == 1);
}

TEST_CASE("training: fixed seed reproduces the loss history") {
  SynthFixture fx(160);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 10;
  tc.seed = 5;

  Rng ra(74), rb(74);
  Model m1(fx.config(), fx.masks(), ra);
  TrainResult r1 = train(m1, fx.ds, tc);
  Model m2(fx.config(), fx.masks(), rb);
  TrainResult r2 = train(m2, fx.ds, tc);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(r1.history[i].train_loss == r2.history[i].train_loss);
    REQUIRE(r1.history[i].val_loss == r2.history[i].val_loss);
  }
}

TEST_CASE("training: loss decreases and the best state is restored") {
  SynthFixture fx(480);
  Rng mrng(75);
  Model model(fx.config(), fx.masks(), mrng);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.patience = 10;
  TrainResult res = train(model, fx.ds, tc);
  REQUIRE(res.history.size() == 5);
  for (std::size_t e = 1; e < 5; ++e)
    REQUIRE(res.history[e].train_loss < res.history[e - 1].train_loss);

  double best = res.history[0].val_loss;
  for (const auto& h : res.history) best = std::min(best, h.val_loss);
  REQUIRE(res.best_val == best);
  // live model carries the best-epoch parameters
  REQUIRE(evaluate_loss(model, fx.ds.val, tc.batch) == Catch::Approx(res.best_val).margin(1e-12));
}

TEST_CASE("training aborts on non-finite loss") {
  SynthFixture fx(240);
  WindowedDataset bad = fx.ds;
  bad.train[3].y[0] = std::numeric_limits<double>::quiet_NaN();
  Rng mrng(76);
  Model model(fx.config(), fx.masks(), mrng);
  TrainConfig tc;
  tc.max_epochs = 2;
  REQUIRE_THROWS_WITH(train(model, bad, tc), ContainsSubstring("diverged"));
}

TEST_CASE("training rejects mismatched geometry") {
  SynthFixture fx(240);
  ModelConfig cfg = fx.config();
  cfg.input_len = 6;  // dataset was built with 12
  Rng mrng(77);
  Model model(cfg, fx.masks(), mrng);
  REQUIRE_THROWS_WITH(train(model, fx.ds, TrainConfig{}), ContainsSubstring("geometry"));
}
