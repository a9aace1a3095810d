#include "cap/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cap/model.hpp"
#include "cap/synth.hpp"
#include "cap/training.hpp"
#include "cap/util.hpp"

namespace cap {

GradCheckResult check_gradients(const std::string& name, std::vector<Tensor> inputs,
                                const std::function<Tensor()>& forward, double eps, double tol,
                                int max_coords_per_input, std::uint64_t subsample_seed) {
  GradCheckResult result;
  result.name = name;

  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = forward();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad());

  double max_rel = 0.0;
  Rng pick(derive_seed(subsample_seed, "gradcheck-coords"));
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto& values = inputs[p].data();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) coords[i] = i;
    if (max_coords_per_input > 0 &&
        values.size() > static_cast<std::size_t>(max_coords_per_input)) {
      pick.shuffle(coords);
      coords.resize(static_cast<std::size_t>(max_coords_per_input));
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      double up = 0.0, down = 0.0;
      {
        NoGradGuard ng;  // numeric side needs values only
        values[i] = saved + eps;
        up = forward().item();
        values[i] = saved - eps;
        down = forward().item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  result.max_rel_err = max_rel;
  result.passed = max_rel <= tol;
  return result;
}

namespace {

Tensor rand_t(std::vector<int> shape, Rng& rng) {
  std::vector<double> v;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back(rng.uniform_real() * 2.0 - 1.0);
  return Tensor::from_values(std::move(shape), std::move(v));
}

/// Scale op with a deliberately wrong backward; the negative control that
/// proves the checker catches bad gradients.
Tensor corrupt_scale(const Tensor& a, double c) {
  Tensor out = scale(a, c);
  // Overwrite the correct rule with one that inflates the gradient.
  detail::TensorNode* node = out.node();
  if (node->backward_fn) {
    node->backward_fn = [c](detail::TensorNode& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa.grad[i] += 1.25 * c * self.grad[i];
    };
  }
  return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng rng(derive_seed(seed, "gradcheck-suite"));

  auto run = [&](const std::string& name, std::vector<Tensor> inputs,
                 const std::function<Tensor()>& fwd, int subsample = 0) {
    results.push_back(check_gradients(name, std::move(inputs), fwd, 1e-5, 1e-4, subsample,
                                      derive_seed(seed, name)));
  };

  {
    Tensor a = rand_t({3, 4}, rng), b = rand_t({4, 5}, rng);
    run("matmul", {a, b}, [=] { return sum(matmul(a, b)); });
  }
  {
    Tensor a = rand_t({3, 4}, rng);
    run("transpose", {a}, [=] { return sum(mul(transpose(a), transpose(a))); });
  }
  {
    Tensor a = rand_t({4, 3}, rng), b = rand_t({4, 3}, rng);
    run("add", {a, b}, [=] { return sum(mul(add(a, b), b)); });
    run("sub", {a, b}, [=] { return sum(mul(sub(a, b), a)); });
    run("mul", {a, b}, [=] { return sum(mul(mul(a, b), a)); });
  }
  {
    Tensor a = rand_t({5}, rng);
    run("scale", {a}, [=] { return sum(mul(scale(a, -1.7), a)); });
  }
  {
    Tensor m = rand_t({4, 3}, rng), v = rand_t({3}, rng);
    run("add_rowvec", {m, v}, [=] { return sum(mul(add_rowvec(m, v), m)); });
    run("matvec", {m, v}, [=] { return sum(matvec(m, v)); });
  }
  {
    Tensor v = rand_t({4}, rng), m = rand_t({4, 3}, rng);
    run("vecmat", {v, m}, [=] { return sum(vecmat(v, m)); });
  }
  {
    Tensor a = rand_t({4, 4}, rng);
    run("relu", {a}, [=] { return sum(mul(relu(a), a)); });
  }
  {
    Tensor a = rand_t({3, 6}, rng);
    run("slice_cols", {a}, [=] { return sum(mul(slice_cols(a, 1, 3), slice_cols(a, 2, 3))); });
  }
  {
    Tensor a = rand_t({3, 2}, rng), b = rand_t({3, 4}, rng);
    run("concat_cols", {a, b}, [=] { return sum(mul(concat_cols({a, b}), concat_cols({a, b}))); });
  }
  {
    Tensor a = rand_t({2}, rng), b = rand_t({3}, rng);
    run("concat_vecs", {a, b}, [=] {
      Tensor c = concat_vecs({a, b});
      return sum(mul(c, c));
    });
  }
  {
    Tensor v = rand_t({3}, rng);
    run("repeat_rowvec", {v}, [=] {
      Tensor r = repeat_rowvec(v, 4);
      return sum(mul(r, r));
    });
  }
  {
    Tensor a = rand_t({3}, rng), b = rand_t({3}, rng), c = rand_t({3}, rng);
    run("stack_rows", {a, b, c}, [=] {
      Tensor s = stack_rows({a, b, c});
      return sum(mul(s, s));
    });
  }
  {
    Tensor a = rand_t({3}, rng), b = rand_t({3}, rng);
    run("stack_scalars", {a, b}, [=] {
      Tensor s = stack_scalars({sum(a), sum(mul(b, b))});
      return sum(mul(s, s));
    });
  }
  {
    Tensor table = rand_t({6, 3}, rng);
    const std::vector<int> ids = {1, 4, 1, 0};
    run("embedding_rows", {table}, [=] {
      Tensor e = embedding_rows(table, ids);
      return sum(mul(e, e));
    });
  }
  {
    Tensor a = rand_t({3, 4}, rng);
    run("sum", {a}, [=] { return sum(a); });
    run("mean_all", {a}, [=] { return mean_all(mul(a, a)); });
    run("mean_rows", {a}, [=] {
      Tensor m = mean_rows(a);
      return sum(mul(m, m));
    });
    run("mean_rows_subset", {a}, [=] {
      Tensor m = mean_rows_subset(a, {0, 2});
      return sum(mul(m, m));
    });
  }
  {
    Tensor v = rand_t({6}, rng);
    run("log_sum_exp", {v}, [=] { return log_sum_exp(scale(v, 2.0)); });
  }
  {
    Tensor x = rand_t({3, 5}, rng), w = rand_t({3, 5}, rng);
    run("softmax_rows", {x, w}, [=] { return sum(mul(softmax_rows(x), w)); });
    run("softmax_axis0", {x, w}, [=] { return sum(mul(softmax(x, 0), w)); });
  }
  {
    Tensor x = rand_t({4, 4}, rng), w = rand_t({4, 4}, rng);
    run("causal_softmax_rows", {x, w},
        [=] { return sum(mul(causal_softmax_rows(x), w)); });
  }
  {
    Tensor x = rand_t({3, 4}, rng), g = rand_t({4}, rng), w = rand_t({3, 4}, rng);
    run("rms_norm_rows", {x, g, w}, [=] { return sum(mul(rms_norm_rows(x, g), w)); });
  }
  {
    Tensor logits = rand_t({4, 6}, rng);
    const std::vector<int> targets = {2, -1, 5, 0};
    run("cross_entropy", {logits}, [=] { return cross_entropy(logits, targets, -1); });
  }
  {
    Tensor a = rand_t({5}, rng), b = rand_t({5}, rng);
    run("cosine_similarity", {a, b}, [=] { return cosine_similarity(a, b); });
  }

  // Composite: one full causal attention block on a micro backbone.
  {
    ModelConfig mc;
    mc.backbone = {8, 2, 2, 16, 12, 16};
    mc.upe = PreferenceConfig{true, 8, 8, 1, 2, 16, false, false, 8};
    mc.adapter = AdapterConfig{true, 8, 8, 4, 2, {0, 1}};
    Model model(mc, derive_seed(seed, "attn-model"));
    const std::vector<int> tokens = {1, 5, 7, 6, 2};
    auto params = model.params().select(nullptr);
    std::vector<Tensor> inputs;
    for (auto& [name, t] : params)
      if (name.rfind("backbone.", 0) == 0) inputs.push_back(t);
    run("attention_block", inputs,
        [&model, tokens] {
          HiddenStates s = model.backbone().forward(tokens, nullptr);
          return mean_all(mul(s.logits, s.logits));
        },
        12);
  }

  // Composite: adapter fusion with context projections.
  {
    Rng local(derive_seed(seed, "adapter-fuse"));
    ParamStore store;
    std::mt19937_64 seed_rng(derive_seed(seed, "adapter-params"));
    AdapterConfig ac{true, 6, 4, 3, 2, {0}};
    ContextAdapter adapter(ac, store, seed_rng);
    // Perturb the zero-initialized up-projection so gradients flow everywhere.
    Tensor w2 = store.get("adapter.l0.w2");
    for (auto& v : w2.data()) v = local.uniform_real() * 0.4 - 0.2;
    Tensor h = rand_t({5, 6}, local);
    Tensor v_u = rand_t({4}, local);
    Tensor e_dc = rand_t({6}, local);
    std::vector<Tensor> inputs = {h, v_u, e_dc};
    for (auto& [name, t] : store.items()) inputs.push_back(t);
    run("adapter_fusion", inputs, [&adapter, h, v_u, e_dc] {
      ContextPack ctx = adapter.project(v_u, e_dc);
      Tensor out = adapter.adapt(h, ctx, 0);
      return mean_all(mul(out, out));
    });
  }

  // Composite: contrastive loss through every embedding.
  {
    Tensor anchor = rand_t({6}, rng), pos = rand_t({6}, rng);
    Tensor n1 = rand_t({6}, rng), n2 = rand_t({6}, rng), n3 = rand_t({6}, rng);
    run("contrastive_loss", {anchor, pos, n1, n2, n3},
        [=] { return contrastive_loss(anchor, pos, {n1, n2, n3}, 0.25); });
  }

  // Composite: personalization term with a projection map.
  {
    Tensor emb = rand_t({5}, rng), v_u = rand_t({4}, rng), map = rand_t({4, 5}, rng);
    run("personalization_loss", {emb, v_u, map},
        [=] { return scale(cosine_similarity(emb, vecmat(v_u, map)), -1.0); });
  }

  // Composite: the full joint objective on a micro model and two records.
  {
    SynthConfig sc;
    sc.seed = derive_seed(seed, "total-data");
    sc.n_users = 2;
    sc.topics = 2;
    sc.history_min = 1;
    sc.history_max = 2;
    sc.body_sentences_min = 2;
    sc.body_sentences_max = 2;
    sc.sentence_len_min = 4;
    sc.sentence_len_max = 5;
    sc.headline_len_min = 2;
    sc.headline_len_max = 3;
    const auto raw = synth_records(sc);
    Vocab vocab = Vocab::build(corpus_texts(raw), 100);
    std::vector<UserRecord> records;
    for (const auto& r : raw) records.push_back(truncate_record(tokenize_record(r, vocab), Caps{}));

    ModelConfig mc;
    mc.backbone = {8, 2, 2, 16, vocab.size(), 48};
    mc.upe = PreferenceConfig{true, 8, 8, 1, 2, 16, false, false, 8};
    mc.adapter = AdapterConfig{true, 8, 8, 4, 2, {0, 1}};
    mc.fact = FactConfig{0.2, 2, 6, 3};
    auto model = std::make_shared<Model>(mc, derive_seed(seed, "total-model"));
    // Off-zero adapters so every parameter group is exercised.
    Tensor w2a = model->params().get("adapter.l0.w2");
    Rng jitter(derive_seed(seed, "total-jitter"));
    for (auto& v : w2a.data()) v = jitter.uniform_real() * 0.2 - 0.1;
    Tensor w2b = model->params().get("adapter.l1.w2");
    for (auto& v : w2b.data()) v = jitter.uniform_real() * 0.2 - 0.1;

    auto params = model->params().select(nullptr);
    std::vector<Tensor> inputs;
    for (auto& [name, t] : params) inputs.push_back(t);
    LossWeights w;
    AblationFlags flags;
    const std::uint64_t neg_seed = derive_seed(seed, "total-negatives");
    auto vocab_ptr = std::make_shared<Vocab>(vocab);
    auto records_ptr = std::make_shared<std::vector<UserRecord>>(records);
    run("total_loss_micro", inputs,
        [model, vocab_ptr, records_ptr, w, flags, neg_seed] {
          std::vector<BodyEncoding> bodies;
          for (const auto& rec : *records_ptr)
            bodies.push_back(encode_body(*model, rec, *vocab_ptr));
          std::vector<Tensor> gens, facts, perss;
          for (std::size_t i = 0; i < records_ptr->size(); ++i) {
            StepLosses losses =
                record_losses(*model, *vocab_ptr, (*records_ptr)[i], bodies,
                              static_cast<int>(i), flags, w, neg_seed + i);
            gens.push_back(losses.gen);
            if (losses.fact) facts.push_back(*losses.fact);
            if (losses.pers) perss.push_back(*losses.pers);
          }
          Tensor total = mean_all(stack_scalars(gens));
          if (!facts.empty()) total = add(total, scale(mean_all(stack_scalars(facts)), w.lambda1));
          if (!perss.empty()) total = add(total, scale(mean_all(stack_scalars(perss)), w.lambda2));
          return total;
        },
        10);
  }

  // Negative control: a corrupted backward must be reported as failing.
  {
    Tensor a = rand_t({4}, rng);
    GradCheckResult r = check_gradients(
        "corrupt_fixture", {a}, [=] { return sum(corrupt_scale(a, 1.5)); }, 1e-5, 1e-4, 0,
        derive_seed(seed, "corrupt"));
    r.expected_failure = true;
    results.push_back(r);
  }

  return results;
}

}  // namespace cap
