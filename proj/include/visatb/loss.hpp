// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core.hpp"
#include "rng.hpp"
#include "weights.hpp"

namespace visatb {

// ---------------------------------------------------------------------------
// Token loss batches
// ---------------------------------------------------------------------------

/// Per-token negative log-likelihoods of one sample, tagged by the balancing
/// unit it belongs to.
struct TokenLossEntry {
  std::string unit;
  std::string sample;
  std::vector<double> token_losses;
};

/// A batch of per-token losses grouped by sample. The raw material of every
/// loss-aggregation scheme; this module never computes log-probabilities
/// itself.
class TokenLossBatch {
 public:
  /// Appends one sample's token losses. Each loss must be finite and ≥ 0.
  /// Samples with zero valid tokens are legal and simply carry no weight.
  void add(std::string_view unit, std::string_view sample, std::vector<double> token_losses) {
    if (unit.empty()) raise(Errc::InvalidConfig, "token losses for empty unit id");
    for (double l : token_losses)
      if (!std::isfinite(l) || l < 0.0)
        raise(Errc::NonFiniteValue, "token loss must be finite and >= 0, got " +
                                        std::to_string(l) + " (unit \"" + std::string(unit) +
                                        "\")");
    entries_.push_back({std::string(unit), std::string(sample), std::move(token_losses)});
  }

  const std::vector<TokenLossEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  /// Total number of tokens across all entries.
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.token_losses.size();
    return n;
  }

 private:
  std::vector<TokenLossEntry> entries_;
};

/// Loss sum and token count of one unit within a batch.
struct UnitLossTotals {
  std::string unit;
  double loss_sum = 0.0;
  std::size_t token_count = 0;
};

/// Per-unit loss sums and token counts, units ordered by first appearance in
/// the batch. Units whose entries carry no tokens are dropped.
inline std::vector<UnitLossTotals> per_unit_totals(const TokenLossBatch& batch) {
  std::vector<UnitLossTotals> totals;
  std::map<std::string_view, std::size_t> index;
  for (const TokenLossEntry& e : batch.entries()) {
    auto [it, inserted] = index.emplace(e.unit, totals.size());
    if (inserted) totals.push_back({e.unit, 0.0, 0});
    UnitLossTotals& t = totals[it->second];
    for (double l : e.token_losses) t.loss_sum += l;
    t.token_count += e.token_losses.size();
  }
  std::erase_if(totals, [](const UnitLossTotals& t) { return t.token_count == 0; });
  return totals;
}

/// Checks that every unit appearing in the batch is a balancing unit of the
/// graph; throws UnknownUnit otherwise.
inline void validate_batch(const TokenLossBatch& batch, const ValidatedTaskGraph& graph) {
  for (const TokenLossEntry& e : batch.entries())
    if (!graph.has_unit(e.unit))
      raise(Errc::UnknownUnit, "batch references unknown unit \"" + e.unit + "\"");
}

// ---------------------------------------------------------------------------
// Loss aggregation schemes
// ---------------------------------------------------------------------------

/// Equal weighting: mean loss over all tokens regardless of task,
///   Σ token losses / Σ token counts.
inline double ew_loss(const TokenLossBatch& batch) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const TokenLossEntry& e : batch.entries()) {
    for (double l : e.token_losses) sum += l;
    count += e.token_losses.size();
  }
  if (count == 0) raise(Errc::EmptyBatch, "loss of a batch with no tokens");
  return sum / static_cast<double>(count);
}

/// Task-weighted token-level loss,
///   Σ_i λ_i · (loss sum of unit i) / Σ_i λ_i · (token count of unit i).
/// With all weights 1 this reduces exactly to ew_loss; scaling all weights by
/// a positive constant leaves the value unchanged.
inline double vitw_loss(const TokenLossBatch& batch, const WeightVector& weights) {
  const std::vector<UnitLossTotals> totals = per_unit_totals(batch);
  if (totals.empty()) raise(Errc::EmptyBatch, "loss of a batch with no tokens");
  double num = 0.0, den = 0.0;
  for (const UnitLossTotals& t : totals) {
    const double w = weights.value_at(t.unit);  // throws MissingWeight when absent
    num += w * t.loss_sum;
    den += w * static_cast<double>(t.token_count);
  }
  return num / den;
}

/// Task-level averaging: mean over the units present in the batch of each
/// unit's mean token loss. Equivalent to vitw_loss with λ_i set to the
/// reciprocal of unit i's token count. Uses the units present in the batch
/// (per-minibatch reality) rather than the graph's global unit count.
inline double tla_loss(const TokenLossBatch& batch) {
  const std::vector<UnitLossTotals> totals = per_unit_totals(batch);
  if (totals.empty()) raise(Errc::EmptyBatch, "loss of a batch with no tokens");
  double sum = 0.0;
  for (const UnitLossTotals& t : totals)
    sum += t.loss_sum / static_cast<double>(t.token_count);
  return sum / static_cast<double>(totals.size());
}

// ---------------------------------------------------------------------------
// Comparison-baseline weight generators
// ---------------------------------------------------------------------------

/// Random loss weighting: N · softmax of i.i.d. standard normal draws. Each
/// entry has expectation ~1; reproducible for a given generator state.
inline WeightVector rlw_weights(Rng& rng, std::vector<std::string> unit_ids) {
  if (unit_ids.empty()) raise(Errc::InvalidConfig, "empty unit list");
  std::vector<double> scores(unit_ids.size());
  for (double& s : scores) s = rng.normal();
  return softmax_weights(std::move(unit_ids), scores, Temperature(1.0), +1,
                         WeightStrategy::Manual);
}

/// History carried between dwa_weights calls: the two most recent per-unit
/// average losses, oldest first.
struct DwaState {
  double temperature = 2.0;  ///< softening applied to the loss-decline ratios
  std::optional<std::vector<double>> prev;   ///< per-unit average loss at t−1
  std::optional<std::vector<double>> prev2;  ///< per-unit average loss at t−2
};

/// Dynamic weight averaging: weights from the loss-decline ratios
/// r_i = L_i(t−1)/L_i(t−2) as N · softmax(r/T). Until two observations exist
/// the weights are all ones. Returns the weights to apply now plus the state
/// advanced by `current_unit_losses` (per-unit average losses of this step,
/// aligned with unit_ids; each finite and positive).
inline std::pair<WeightVector, DwaState> dwa_weights(
    const DwaState& state, const std::vector<std::string>& unit_ids,
    const std::vector<double>& current_unit_losses) {
  const std::size_t n = unit_ids.size();
  if (n == 0) raise(Errc::InvalidConfig, "empty unit list");
  if (current_unit_losses.size() != n)
    raise(Errc::MismatchedUnits, "per-unit losses do not match unit list");
  if (!(std::isfinite(state.temperature) && state.temperature > 0.0))
    raise(Errc::InvalidConfig, "dwa temperature must be finite and positive");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(current_unit_losses[i]) || current_unit_losses[i] <= 0.0)
      raise(Errc::InvalidConfig, "dwa loss for unit \"" + unit_ids[i] +
                                     "\" must be finite and positive");
  auto check_history = [&](const std::optional<std::vector<double>>& h, const char* which) {
    if (h && h->size() != n)
      raise(Errc::MismatchedUnits, std::string("dwa state vector ") + which +
                                       " does not match unit list");
  };
  check_history(state.prev, "t-1");
  check_history(state.prev2, "t-2");

  WeightVector w = WeightVector::ones(unit_ids);
  if (state.prev && state.prev2) {
    std::vector<double> ratios(n);
    for (std::size_t i = 0; i < n; ++i) ratios[i] = (*state.prev)[i] / (*state.prev2)[i];
    w = softmax_weights(unit_ids, ratios, Temperature(state.temperature), +1,
                        WeightStrategy::Manual);
  }

  DwaState next;
  next.temperature = state.temperature;
  next.prev2 = state.prev;
  next.prev = current_unit_losses;
  return {std::move(w), std::move(next)};
}

}  // namespace visatb
