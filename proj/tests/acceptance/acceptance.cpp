// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "../unit/support.hpp"
#include "sslm/clustering/histogram.hpp"
#include "sslm/corpus/synthetic.hpp"
#include "sslm/eval/cost.hpp"
#include "sslm/eval/perplexity.hpp"
#include "sslm/eval/report.hpp"
#include "sslm/model/count.hpp"
#include "sslm/model/lora.hpp"
#include "sslm/model/loss.hpp"
#include "sslm/model/pn.hpp"
#include "sslm/model/transformer.hpp"
#include "sslm/pipeline/matrix.hpp"
#include "sslm/sampler/importance.hpp"
#include "sslm/sampler/resample.hpp"
#include "sslm/train/trainer.hpp"

using namespace sslm;
using testing::finite_difference_check;
using testing::jitter;
using testing::random_batch;
using testing::tiny_config;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %2d  %-34s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs_diff(const RowMatrix<double>& a, const RowMatrix<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

Outcome pn_projection() {
  Rng rng(1001);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t heads = 1 + rng.below(2);
    const std::size_t d = heads * 2 * (1 + rng.below(16 / (heads * 2)));
    auto c = tiny_config(5 + rng.below(8), d, heads, 1 + rng.below(2), 2 + rng.below(14), 3 + rng.below(5));
    c.tie_embeddings = rng.below(2) == 0;
    const PnConfig pn{1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4)};
    auto p = build_pn<double>(c, pn, 2000 + static_cast<std::uint64_t>(trial));
    jitter(p, 3000 + static_cast<std::uint64_t>(trial), 0.05);
    const Batch b = random_batch(rng, c.vocab_size, 1 + rng.below(4), c.context_length, pn.k);
    const auto routed = pn_forward(p, b);
    for (std::size_t s = 0; s < b.size; ++s) {
      const std::vector<std::size_t> one = {s};
      const auto ref = forward<double>(project_expert(p, b.clusters[s]), b.select(one));
      const auto rows = routed.middleRows(static_cast<Eigen::Index>(s * b.length), static_cast<Eigen::Index>(b.length));
      worst = std::max(worst, max_abs_diff(rows, ref));
    }
  }
  return {worst <= 1e-10, fmt("max|diff| = %.3e over 100 triples", worst)};
}

Outcome hard_mixture() {
  std::size_t compared = 0;
  for (std::size_t k : {1u, 2u, 4u}) {
    auto p = build_pn<double>(tiny_config(), PnConfig{k, k, k}, 4000 + k, PnInit::hard_mixture);
    for (std::size_t e = 0; e < k; ++e) {
      const auto mlp = materialize_mlp(p, e);
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const std::size_t su = mlp.up[l].numel(), sd = mlp.down[l].numel();
        for (std::size_t j = 0; j < su; ++j, ++compared) {
          if (mlp.up[l].data[j] != p.layers[l].t_up.data[e * su + j]) return {false, "up slice differs"};
        }
        for (std::size_t j = 0; j < sd; ++j, ++compared) {
          if (mlp.down[l].data[j] != p.layers[l].t_down.data[e * sd + j]) return {false, "down slice differs"};
        }
      }
    }
  }
  return {true, std::to_string(compared) + " weights equal bitwise"};
}

Outcome gradient_checks() {
  const auto c = tiny_config(9, 8, 2, 2, 12, 6);
  Rng rng(5001);
  std::string worst_name;
  double worst = 0;
  auto note = [&](const std::string& model, const testing::GradCheck& r) {
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = model + ":" + r.worst_tensor;
    }
  };
  std::size_t largest = 0;

  auto slm = build_slm<double>(c, 5002);
  jitter(slm, 5003, 0.1);
  const Batch b = random_batch(rng, c.vocab_size, 3, 7);
  auto gs = slm.zeros_like();
  slm_grad(slm, b, gs);
  largest = std::max(largest, slm.numel());
  note("slm", finite_difference_check(slm, gs, [&](const SlmParams<double>& q) {
         return cross_entropy<double>(forward<double>(q, b), b.targets).mean();
       }));

  auto pn = build_pn<double>(c, PnConfig{3, 3, 2}, 5004);
  jitter(pn, 5005, 0.1);
  const Batch bp = random_batch(rng, c.vocab_size, 4, 7, 3);
  auto gp = pn.zeros_like();
  pn_grad(pn, bp, gp);
  largest = std::max(largest, pn.numel());
  note("pn", finite_difference_check(pn, gp, [&](const PnParams<double>& q) {
         return cross_entropy<double>(pn_forward(q, bp), bp.targets).mean();
       }));

  auto teacher = build_slm<double>(tiny_config(9, 12, 2, 1, 16, 6), 5006);
  jitter(teacher, 5007, 0.3);
  const DistillConfig dc{0.4, 1.7};
  auto gd = slm.zeros_like();
  distill_grad(slm, teacher, dc, b, gd);
  const RowMatrix<double> tl = forward<double>(teacher, b);
  note("distill", finite_difference_check(slm, gd, [&](const SlmParams<double>& q) {
         return distill_loss<double>(forward<double>(q, b), tl, b.targets, dc).mean();
       }));

  auto ad = build_lora(slm, LoraConfig{2, LoraSites::all}, 5008);
  jitter(ad, 5009, 0.2);
  auto ga = ad.zeros_like();
  lora_grad(slm, ad, b, ga);
  note("lora", finite_difference_check(ad, ga, [&](const LoraAdapters<double>& q) {
         return cross_entropy<double>(lora_forward(slm, q, b), b.targets).mean();
       }));

  const bool small = largest <= 20000;
  return {worst <= 1e-4 && small, fmt("worst rel err %.3e", worst) + " (" + worst_name + "), largest model " +
                                      std::to_string(largest) + " params"};
}

Outcome importance_identity() {
  const std::size_t n = 100, k = 4;
  Rng rng(6001);
  std::vector<std::size_t> labels;
  std::vector<std::pair<std::size_t, double>> per;
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back(i < k ? i : rng.below(k));
    per.emplace_back(labels.back(), 0.1 + 3.0 * counter_uniform(6002, i));
  }
  const auto gen = histogram_from_labels(labels, k);
  const auto spec = ClusterHistogram::from_counts({3, 1, 0, 6});
  double exact = 0;
  for (const auto& [c, loss] : per) exact += spec.frequencies[c] / static_cast<double>(gen.counts[c]) * loss;
  const double got = weighted_loss(per, importance_weights(spec, gen));
  const double err = std::abs(got - exact);
  bool ones = true;
  for (double w : importance_weights(gen, gen).weights) ones = ones && w == 1.0;
  return {err <= 1e-12 && ones, fmt("|weighted - exact| = %.3e", err) + (ones ? ", identical histograms give w = 1" : ", w != 1")};
}

Outcome resample_fidelity() {
  const std::size_t draws = 100000;
  std::vector<Window> windows;
  for (std::size_t i = 0; i < 60; ++i) {
    Window w;
    w.doc_id = "g" + std::to_string(i);
    w.tokens = {1, 2};
    w.cluster = i % 4;
    windows.push_back(w);
  }
  const auto plan = make_plan(ClusterHistogram::from_frequencies({0.1, 0.2, 0.3, 0.4}), draws, 7001);
  const auto set = resample(windows, plan);
  std::vector<std::size_t> labels;
  for (const auto& w : set.windows) labels.push_back(*w.cluster);
  const double tv = total_variation(histogram_from_labels(labels, 4).frequencies, plan.probabilities);
  // Binomial tail: TV <= 0.5 * sum_c 6 sigma_c with sigma_c = sqrt(p(1-p)/n).
  double bound = 0;
  for (double p : plan.probabilities) bound += 0.5 * 6.0 * std::sqrt(p * (1 - p) / static_cast<double>(draws));
  return {tv <= 0.01, fmt("TV = %.5f", tv) + fmt(" (six-sigma binomial bound %.5f)", bound)};
}

Outcome macro_average_semantics() {
  const std::map<std::string, double> nll = {{"a", 0.7}, {"b", 1.9}, {"c", 2.4}, {"d", 3.1}};
  double prod = 1;
  for (const auto& [_, v] : nll) prod *= std::exp(v);
  const double geo = std::pow(prod, 0.25);
  const double err = std::abs(macro_average(nll) - geo) / geo;
  auto p = build_slm<double>(tiny_config(), 8001);
  Corpus c;
  c.vocab_size = 11;
  c.documents.push_back({"a1", "a", "", {1, 2, 3, 4, 5, 6, 7, 8}});
  c.documents.push_back({"b1", "b", "", {9, 8, 7, 3}});
  const double base = make_report("m", perplexity_by_domain(p, c)).macro_ppl;
  Corpus dup = c;
  for (int i = 0; i < 4; ++i) dup.documents.push_back({"a" + std::to_string(i + 2), "a", "", {1, 2, 3, 4, 5, 6, 7, 8}});
  const double doubled = make_report("m", perplexity_by_domain(p, dup)).macro_ppl;
  const double shift = std::abs(doubled - base);
  return {err <= 1e-12 && shift <= 1e-12,
          fmt("geometric-mean rel err %.3e", err) + fmt(", duplication shift %.3e", shift)};
}

Outcome count_anchors() {
  ModelConfig c;
  c.num_layers = 7;
  c.model_dim = 1024;
  c.inner_dim = 4096;
  c.num_heads = 8;
  c.vocab_size = 32000;
  c.context_length = 1024;
  const double slm = static_cast<double>(slm_param_count(c)) / 1e6;
  const double mix = static_cast<double>(count_mixture(c, 16).pretrain) / 1e6;
  const double g1 = slm / 126.0 - 1, g2 = mix / 2016.0 - 1;
  return {std::abs(g1) <= 0.05 && std::abs(g2) <= 0.05,
          fmt("SLM %.1fM", slm) + fmt(" (gap %+.2f%%)", 100 * g1) + fmt(", 16-expert mixture %.0fM", mix) +
              fmt(" (gap %+.2f%%)", 100 * g2)};
}

Outcome cost_model() {
  const CostModel pn{650, 0.02}, is{0, 130};
  double affine = 0;
  for (double n = 0; n <= 100; n += 0.5) affine = std::max(affine, std::abs(total_cost(pn, n) - (650 + 0.02 * n)));
  const double second = std::abs((total_cost(is, 9) - total_cost(is, 8)) - (total_cost(is, 2) - total_cost(is, 1)));
  const double n = crossover_tasks(pn, is);
  const bool later = total_cost(is, 10) > total_cost(pn, 10) && total_cost(is, 1) < total_cost(pn, 1);
  return {affine == 0 && second <= 1e-9 && std::abs(n - 5.0) <= 0.01 && later,
          fmt("crossover N = %.4f", n) + fmt(", affine residual %.1e", affine)};
}

Outcome micro_experiment() {
  const int seeds = 5;
  int a = 0, b = 0, c = 0, d = 0;
  std::string rows;
  for (int s = 0; s < seeds; ++s) {
    SyntheticPairConfig sp;
    sp.seed = 100 + static_cast<std::uint64_t>(s);
    const auto in = synthetic_pair(sp);
    MatrixConfig mc;
    mc.model.model_dim = 64;
    mc.model.num_layers = 2;
    mc.model.inner_dim = 256;
    mc.model.num_heads = 4;
    mc.model.context_length = 32;
    mc.train.learning_rate = 1e-3;
    mc.train.warmup_steps = 100;
    mc.train.max_steps = 600;
    mc.train.batch_size = 16;
    mc.finetune.eval_every = 25;
    mc.finetune.patience = 3;
    mc.finetune.max_steps = 400;
    mc.finetune.lr_divisor = 3;
    mc.pn = {4, 4, 4};
    mc.seed = static_cast<std::uint64_t>(s);
    const auto r = run_matrix<float>(in, mc);
    const std::size_t n = mc.spec_sizes.front();
    const auto& slm = r.row("slm", n);
    const double ft = slm.nll, pre = slm.pretrained_nll.value();
    const double nopt = r.row("slm_nopt", n).nll, is = r.row("slm_is", n).nll, pn = r.row("slm_pn", n).nll;
    a += ft < pre;
    b += nopt > ft;
    c += is <= ft;
    d += pn <= ft;
    char buf[200];
    std::snprintf(buf, sizeof buf, "\n        seed %d: pretrained %.3f  slm %.3f  nopt %.3f  is %.3f  pn %.3f", s, pre, ft,
                  nopt, is, pn);
    rows += buf;
    std::fflush(stdout);
  }
  const bool ok = a >= 4 && b >= 4 && c >= 4 && d >= 4;
  char head[160];
  std::snprintf(head, sizeof head, "(a) %d/5  (b) %d/5  (c) %d/5  (d) %d/5  [target NLL]", a, b, c, d);
  return {ok, head + rows};
}

// Minimal parameter pack for driving the loop without a model.
struct Scalars {
  Tensor<double> x{{2}};
  template <typename F>
  void for_each(F&& f) {
    f(std::string("x"), x);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(std::string("x"), x);
  }
  Scalars zeros_like() const { return Scalars{}; }
};

Outcome early_stopping_and_lora() {
  Rng rng(9001);
  int argmin_ok = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> script;
    for (int i = 0; i < 64; ++i) script.push_back(rng.uniform());
    std::vector<std::vector<double>> snaps;
    LoopSpec spec;
    spec.cfg.warmup_steps = 0;
    spec.lr = 0.05;
    spec.max_steps = 5 + rng.below(40);
    spec.eval_every = 1 + rng.below(4);
    spec.patience = 1 + rng.below(4);
    auto r = run_loop<double>(
        Scalars{}, spec, [](std::size_t) { return Batch{}; },
        [](const Scalars&, const Batch&, Scalars& g) {
          g.x.data = {1.0, -0.5};
          return LossSum{1.0, 1};
        },
        std::function<double(const Scalars&)>([&](const Scalars& p) {
          snaps.push_back(p.x.data);
          return script[snaps.size() - 1];
        }),
        [](const Batch&) { return 1.0; });
    std::size_t best = 0;
    for (std::size_t i = 1; i < snaps.size(); ++i) {
      if (script[i] < script[best]) best = i;
    }
    argmin_ok += r.params.x.data == snaps[best];
  }
  const auto c = tiny_config(11, 8, 2, 3, 12, 6);
  auto base = build_slm<double>(c, 9002);
  jitter(base, 9003, 0.1);
  Rng brng(9004);
  const Batch b = random_batch(brng, c.vocab_size, 3, 7);
  double delta = 0;
  bool counts = true;
  for (auto sites : {LoraSites::mlp, LoraSites::attention, LoraSites::all}) {
    for (std::size_t rank : {1u, 3u, 8u}) {
      auto ad = build_lora(base, LoraConfig{rank, sites}, 9005);
      delta = std::max(delta, max_abs_diff(lora_forward(base, ad, b), forward<double>(base, b)));
      std::size_t expected = 0;
      for (const auto& layer : ad.layers) {
        for (const auto& pr : layer) {
          if (!pr.empty()) expected += rank * (pr.a.shape[1] + pr.b.shape[0]);
        }
      }
      counts = counts && ad.numel() == expected && lora_param_count(c, LoraConfig{rank, sites}) == expected;
    }
  }
  return {argmin_ok == trials && delta == 0 && counts,
          std::to_string(argmin_ok) + "/" + std::to_string(trials) + " argmin" + fmt(", LoRA max|dlogit| %.1e", delta) +
              (counts ? ", counts r(d_in+d_out)" : ", count mismatch")};
}

Outcome entropy_diagnostics() {
  double worst = 0;
  for (std::size_t k : {1u, 2u, 3u, 4u, 16u, 64u, 1024u}) {
    const auto h = ClusterHistogram::from_counts(std::vector<std::size_t>(k, 7));
    worst = std::max(worst, std::abs(entropy(h) - std::log(static_cast<double>(k))));
  }
  const double ln1024 = std::log(1024.0);
  const double reported = 6.85;
  const bool anchor = reported < ln1024 && (ln1024 - reported) / ln1024 < 0.02;
  return {worst <= 1e-12 && anchor, fmt("max|H - ln k| = %.1e", worst) + fmt(", ln 1024 = %.3f", ln1024) +
                                        fmt(" vs 6.85 (%.1f%% below uniform)", 100 * (ln1024 - reported) / ln1024)};
}

}  // namespace

int main() {
  criterion(1, "PN projection equivalence", pn_projection);
  criterion(2, "hard-mixture embedding", hard_mixture);
  criterion(3, "gradient checks", gradient_checks);
  criterion(4, "importance-sampling identity", importance_identity);
  criterion(5, "resampling fidelity", resample_fidelity);
  criterion(6, "macro-average semantics", macro_average_semantics);
  criterion(7, "parameter-count anchors", count_anchors);
  criterion(8, "cost model", cost_model);
  criterion(9, "directional micro-experiment", micro_experiment);
  criterion(10, "early stopping and LoRA contracts", early_stopping_and_lora);
  criterion(11, "entropy diagnostics", entropy_diagnostics);
  std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
