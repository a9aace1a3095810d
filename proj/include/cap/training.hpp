#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cap/data.hpp"
#include "cap/metrics.hpp"
#include "cap/model.hpp"
#include "cap/text.hpp"

namespace cap {

struct LossWeights {
  double lambda1 = 0.5;  // fact-consistency weight
  double lambda2 = 0.2;  // personalization weight
};

struct AblationFlags {
  bool upe = true;
  bool cia = true;
  bool fcrm = true;
  bool pers = true;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 42;
  LossWeights weights;
  AblationFlags flags;
  int history_cap = 50;
  bool two_phase = false;
  int phase1_epochs = 5;
};

/// Per-step / per-epoch loss values; total always equals
/// gen + lambda1*fact + lambda2*pers evaluated in exactly that order.
struct LossBundle {
  double gen = 0.0;
  double fact = 0.0;
  double pers = 0.0;
  double total = 0.0;
};

LossBundle make_bundle(double gen, double fact, double pers, const LossWeights& w);

struct EpochLog {
  int epoch = 0;
  LossBundle losses;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Differentiable loss terms for one record inside a batch. Fact/pers terms
/// are absent when the flag or weight disables them, or when the record
/// cannot produce them (no segments, zero-norm vectors, no negatives).
struct StepLosses {
  Tensor gen;
  std::optional<Tensor> fact;
  std::optional<Tensor> pers;
};

/// Body encoding shared across loss terms: one context-free pass provides
/// the article vector and every segment embedding.
struct BodyEncoding {
  HiddenStates states;
  Tensor e_dc;
  std::vector<Segment> segments;
};

BodyEncoding encode_body(const Model& model, const UserRecord& rec, const Vocab& vocab);

StepLosses record_losses(const Model& model, const Vocab& vocab, const UserRecord& rec,
                         const std::vector<BodyEncoding>& bodies, int self_index,
                         const AblationFlags& flags, const LossWeights& weights,
                         std::uint64_t negative_seed);

/// Joint training per the standard recipe: per-batch mean losses, backward,
/// global-norm clipping, AdamW. Deterministic given (model seed, cfg.seed).
TrainResult train_model(Model& model, const std::vector<UserRecord>& records,
                        const Vocab& vocab, const TrainConfig& cfg);

std::string log_to_jsonl(const std::vector<EpochLog>& log);

enum class SweepAxis { kLambda1, kLambda2, kHistoryCap };
SweepAxis sweep_axis_from_name(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  MetricsReport report;
};

/// One train+eval run per axis value; everything else held fixed.
std::vector<SweepRow> sweep(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                            const std::vector<UserRecord>& train_records,
                            const std::vector<UserRecord>& eval_records, const Vocab& vocab,
                            const EvalConfig& eval_cfg, SweepAxis axis,
                            const std::vector<double>& values);

/// Table-2 style variants: full, no-upe, no-cia, no-fcrm, no-pers.
std::vector<std::string> ablation_variant_names();

/// Applies a variant to (model structure, loss flags). Unknown name errors.
void apply_variant(const std::string& name, ModelConfig& model_cfg, TrainConfig& train_cfg);

}  // namespace cap
