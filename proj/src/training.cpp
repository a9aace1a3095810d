#include "cap/training.hpp"

#include <algorithm>
#include <cmath>

#include "cap/optim.hpp"
#include "cap/util.hpp"
#include "json.hpp"

namespace cap {

namespace {

std::vector<TokenSpan> id_segments(const std::vector<int>& tokens, const Vocab& vocab,
                                   const FactConfig& fc) {
  std::function<bool(const int&)> punct = [&vocab](const int& id) {
    return vocab.is_sentence_punct(id);
  };
  return segment_spans<int>(tokens, punct, fc.window, fc.stride);
}

}  // namespace

LossBundle make_bundle(double gen, double fact, double pers, const LossWeights& w) {
  LossBundle b;
  b.gen = gen;
  b.fact = fact;
  b.pers = pers;
  b.total = gen + w.lambda1 * fact + w.lambda2 * pers;
  return b;
}

BodyEncoding encode_body(const Model& model, const UserRecord& rec, const Vocab& vocab) {
  if (rec.current.body.empty()) fail("encode_body: empty current body");
  BodyEncoding enc;
  enc.states = model.backbone().forward(rec.current.body, nullptr);
  std::vector<int> rows;
  for (std::size_t i = 0; i < rec.current.body.size(); ++i)
    if (rec.current.body[i] != Vocab::kPad) rows.push_back(static_cast<int>(i));
  enc.e_dc = mean_rows_subset(enc.states.final_states, rows);
  for (const auto& span : id_segments(rec.current.body, vocab, model.config().fact)) {
    Segment seg;
    seg.span = span;
    seg.source = SegmentSource::kBody;
    seg.embedding = Backbone::pool_span(enc.states, span.begin, span.end);
    enc.segments.push_back(std::move(seg));
  }
  return enc;
}

StepLosses record_losses(const Model& model, const Vocab& vocab, const UserRecord& rec,
                         const std::vector<BodyEncoding>& bodies, int self_index,
                         const AblationFlags& flags, const LossWeights& weights,
                         std::uint64_t negative_seed) {
  const BodyEncoding& body = bodies[static_cast<std::size_t>(self_index)];
  const FactConfig& fc = model.config().fact;

  Tensor v_u = flags.upe ? model.user_vector(rec.history) : model.preference().cold_start();
  std::optional<ContextPack> ctx;
  if (flags.cia && model.has_adapter()) ctx = model.make_context(v_u, body.e_dc);

  // Teacher-forced sequence: [bos] body [sep] reference [eos]
  std::vector<int> seq;
  seq.push_back(Vocab::kBos);
  seq.insert(seq.end(), rec.current.body.begin(), rec.current.body.end());
  const int sep_pos = static_cast<int>(seq.size());
  seq.push_back(Vocab::kSep);
  seq.insert(seq.end(), rec.reference.begin(), rec.reference.end());
  seq.push_back(Vocab::kEos);

  std::vector<int> inputs(seq.begin(), seq.end() - 1);
  std::vector<int> targets(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    targets[i] = static_cast<int>(i) < sep_pos ? -1 : seq[i + 1];

  HiddenStates states = model.backbone().forward(inputs, ctx ? &*ctx : nullptr);

  StepLosses out;
  out.gen = cross_entropy(states.logits, targets, -1);

  const int ref_len = static_cast<int>(rec.reference.size());
  const bool want_fact = flags.fcrm && weights.lambda1 > 0.0;
  const bool want_pers = flags.pers && weights.lambda2 > 0.0;
  if (ref_len == 0 || (!want_fact && !want_pers)) return out;

  if (want_fact && !body.segments.empty()) {
    // Teacher-forced anchor: the reference segment with the strongest body
    // support (positions offset past [sep]).
    const auto anchor_spans = id_segments(rec.reference, vocab, fc);
    std::vector<Segment> anchors;
    for (const auto& span : anchor_spans) {
      Segment seg;
      seg.span = span;
      seg.source = SegmentSource::kGenerated;
      seg.embedding =
          Backbone::pool_span(states, sep_pos + 1 + span.begin, sep_pos + 1 + span.end);
      anchors.push_back(std::move(seg));
    }
    if (!anchors.empty()) {
      int anchor_idx = 0, positive_idx = 0;
      double best = -2.0;
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const int pos = mine_positive(anchors[a], body.segments);
        const double sim = cosine_value(anchors[a].embedding.data(),
                                        body.segments[static_cast<std::size_t>(pos)].embedding.data());
        if (sim > best) {
          best = sim;
          anchor_idx = static_cast<int>(a);
          positive_idx = pos;
        }
      }
      std::vector<Segment> foreign;
      for (std::size_t b = 0; b < bodies.size(); ++b) {
        if (static_cast<int>(b) == self_index) continue;
        for (const auto& seg : bodies[b].segments) foreign.push_back(seg);
      }
      try {
        const auto negatives =
            sample_negatives(anchors[static_cast<std::size_t>(anchor_idx)], body.segments,
                             positive_idx, foreign, fc.negatives, negative_seed);
        std::vector<Tensor> neg_embs;
        for (const auto& n : negatives) neg_embs.push_back(n.embedding);
        out.fact = contrastive_loss(anchors[static_cast<std::size_t>(anchor_idx)].embedding,
                                    body.segments[static_cast<std::size_t>(positive_idx)].embedding,
                                    neg_embs, fc.tau);
      } catch (const std::exception&) {
        // Not enough negative candidates for this record; the term is skipped.
      }
    }
  }

  if (want_pers) {
    Tensor emb_gen = Backbone::pool_span(states, sep_pos + 1, sep_pos + 1 + ref_len);
    try {
      out.pers = scale(cosine_similarity(emb_gen, model.pers_projection(v_u)), -1.0);
    } catch (const std::exception&) {
      // Zero-norm vector; contributes nothing this step.
    }
  }
  return out;
}

namespace {

struct BatchGraph {
  Tensor total;
  LossBundle bundle;
};

BatchGraph batch_losses(const Model& model, const Vocab& vocab,
                        const std::vector<const UserRecord*>& batch,
                        const AblationFlags& flags, const LossWeights& weights,
                        std::uint64_t seed, int epoch, const std::vector<int>& record_ids) {
  std::vector<BodyEncoding> bodies;
  for (const auto* rec : batch) bodies.push_back(encode_body(model, *rec, vocab));

  std::vector<Tensor> gens, facts, perss;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::uint64_t neg_seed =
        derive_seed(seed, "negatives", static_cast<std::uint64_t>(epoch),
                    static_cast<std::uint64_t>(record_ids[i]));
    StepLosses losses = record_losses(model, vocab, *batch[i], bodies, static_cast<int>(i),
                                      flags, weights, neg_seed);
    gens.push_back(losses.gen);
    if (losses.fact) facts.push_back(*losses.fact);
    if (losses.pers) perss.push_back(*losses.pers);
  }

  Tensor gen_mean = gens.size() == 1 ? gens[0] : mean_all(stack_scalars(gens));
  Tensor fact_mean, pers_mean;
  if (!facts.empty()) fact_mean = facts.size() == 1 ? facts[0] : mean_all(stack_scalars(facts));
  if (!perss.empty()) pers_mean = perss.size() == 1 ? perss[0] : mean_all(stack_scalars(perss));

  // total = (gen + l1*fact) + l2*pers, matching the logged-identity order.
  Tensor total = gen_mean;
  if (fact_mean.defined()) total = add(total, scale(fact_mean, weights.lambda1));
  if (pers_mean.defined()) total = add(total, scale(pers_mean, weights.lambda2));

  BatchGraph g;
  g.total = total;
  g.bundle = make_bundle(gen_mean.item(), fact_mean.defined() ? fact_mean.item() : 0.0,
                         pers_mean.defined() ? pers_mean.item() : 0.0, weights);
  return g;
}

/// Body-only language-model objective for phase 1 of two-phase training.
Tensor body_lm_loss(const Model& model, const UserRecord& rec) {
  std::vector<int> seq;
  seq.push_back(Vocab::kBos);
  seq.insert(seq.end(), rec.current.body.begin(), rec.current.body.end());
  seq.push_back(Vocab::kEos);
  std::vector<int> inputs(seq.begin(), seq.end() - 1);
  std::vector<int> targets(seq.begin() + 1, seq.end());
  HiddenStates states = model.backbone().forward(inputs, nullptr);
  return cross_entropy(states.logits, targets, -1);
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<UserRecord>& records,
                        const Vocab& vocab, const TrainConfig& cfg) {
  if (records.empty()) fail("train: empty dataset");
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.beta1 = cfg.beta1;
  opt_cfg.beta2 = cfg.beta2;
  opt_cfg.eps = cfg.eps;
  opt_cfg.weight_decay = cfg.weight_decay;

  const bool two_phase = cfg.two_phase;
  auto is_backbone = [](const std::string& name) { return name.rfind("backbone.", 0) == 0; };
  auto phase1_params = model.params().select(is_backbone);
  auto phase2_params =
      model.params().select([&](const std::string& name) { return !is_backbone(name); });
  auto all_params = model.params().select(nullptr);

  AdamW opt_all(all_params, opt_cfg);
  AdamW opt_phase1(phase1_params, opt_cfg);
  AdamW opt_phase2(phase2_params, opt_cfg);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool phase1 = two_phase && epoch < cfg.phase1_epochs;
    std::vector<int> order(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double sum_gen = 0.0, sum_fact = 0.0, sum_pers = 0.0;
    int n_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const UserRecord*> batch;
      std::vector<int> record_ids;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&records[static_cast<std::size_t>(order[i])]);
        record_ids.push_back(order[i]);
      }

      model.params().zero_grad();
      LossBundle bundle;
      Tensor total;
      if (phase1) {
        std::vector<Tensor> gens;
        for (const auto* rec : batch) gens.push_back(body_lm_loss(model, *rec));
        total = gens.size() == 1 ? gens[0] : mean_all(stack_scalars(gens));
        bundle = make_bundle(total.item(), 0.0, 0.0, cfg.weights);
      } else {
        BatchGraph g = batch_losses(model, vocab, batch, cfg.flags, cfg.weights, cfg.seed,
                                    epoch, record_ids);
        total = g.total;
        bundle = g.bundle;
      }
      if (!std::isfinite(bundle.total))
        fail("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
             std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));

      backward(total);
      if (two_phase) {
        if (phase1) {
          clip_global_norm(phase1_params, cfg.clip_norm);
          opt_phase1.step();
        } else {
          clip_global_norm(phase2_params, cfg.clip_norm);
          opt_phase2.step();
        }
      } else {
        clip_global_norm(all_params, cfg.clip_norm);
        opt_all.step();
      }

      sum_gen += bundle.gen;
      sum_fact += bundle.fact;
      sum_pers += bundle.pers;
      ++n_steps;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.losses = make_bundle(sum_gen / n_steps, sum_fact / n_steps, sum_pers / n_steps,
                               cfg.weights);
    result.log.push_back(entry);
  }
  return result;
}

std::string log_to_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json obj;
    obj["epoch"] = e.epoch;
    obj["L_gen"] = e.losses.gen;
    obj["L_fact"] = e.losses.fact;
    obj["L_pers"] = e.losses.pers;
    obj["L_total"] = e.losses.total;
    out += obj.dump();
    out += "\n";
  }
  return out;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "lambda1") return SweepAxis::kLambda1;
  if (name == "lambda2") return SweepAxis::kLambda2;
  if (name == "nmax" || name == "history_cap") return SweepAxis::kHistoryCap;
  fail("sweep: unknown axis '" + name + "' (expected lambda1|lambda2|nmax)");
}

std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kLambda1: return "lambda1";
    case SweepAxis::kLambda2: return "lambda2";
    case SweepAxis::kHistoryCap: return "nmax";
  }
  return "?";
}

std::vector<SweepRow> sweep(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            const std::vector<UserRecord>& train_records,
                            const std::vector<UserRecord>& eval_records, const Vocab& vocab,
                            const EvalConfig& eval_cfg, SweepAxis axis,
                            const std::vector<double>& values) {
  if (values.empty()) fail("sweep: empty value list");
  std::vector<SweepRow> rows;
  for (double value : values) {
    TrainConfig tc = train_cfg;
    ModelConfig mc = model_cfg;
    std::vector<UserRecord> train = train_records;
    std::vector<UserRecord> eval = eval_records;
    switch (axis) {
      case SweepAxis::kLambda1:
        tc.weights.lambda1 = value;
        break;
      case SweepAxis::kLambda2:
        tc.weights.lambda2 = value;
        break;
      case SweepAxis::kHistoryCap: {
        Caps caps;
        caps.history_cap = static_cast<int>(value);
        caps.title_cap = 1 << 30;
        caps.body_cap = 1 << 30;
        for (auto& r : train) r = truncate_record(std::move(r), caps);
        for (auto& r : eval) r = truncate_record(std::move(r), caps);
        tc.history_cap = static_cast<int>(value);
        break;
      }
    }
    Model model(mc, tc.seed);
    train_model(model, train, vocab, tc);
    SweepRow row;
    row.value = value;
    row.report = evaluate(model, eval, vocab, eval_cfg);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> ablation_variant_names() {
  return {"full", "no-upe", "no-cia", "no-fcrm", "no-pers"};
}

void apply_variant(const std::string& name, ModelConfig& model_cfg, TrainConfig& train_cfg) {
  if (name == "full") return;
  if (name == "no-upe") {
    model_cfg.upe.enabled = false;
    train_cfg.flags.upe = false;
    return;
  }
  if (name == "no-cia") {
    model_cfg.adapter.enabled = false;
    train_cfg.flags.cia = false;
    return;
  }
  if (name == "no-fcrm") {
    train_cfg.flags.fcrm = false;
    return;
  }
  if (name == "no-pers") {
    train_cfg.flags.pers = false;
    return;
  }
  fail("ablate: unknown variant '" + name + "'");
}

}  // namespace cap
