// SPDX-License-Identifier: Apache-2.0
#include "claa/error.hpp"
#include "claa/eval.hpp"

namespace claa {

namespace {

void record(RankCorrelationReport& report, std::size_t layer, const ImportanceScores& heuristic,
            const ImportanceScores& oracle) {
  try {
    report.rho[layer] = spearman_rho(heuristic, oracle);
  } catch (const DegenerateRanking&) {
    // A constant heuristic has no ordering to compare; leave the layer out.
  }
}

}  // namespace

std::vector<RankCorrelationReport> layerwise_correlation(const Model& model,
                                                         std::span<const TokenId> prompt,
                                                         const RankingParams& params,
                                                         const std::string& prompt_id) {
  const std::size_t layers = model.config.num_layers;
  ForwardOptions opts;
  opts.all_logits = false;
  for (std::size_t l = 0; l < layers; ++l) opts.capture.insert(l);
  ForwardOutput out = full_forward(model, TokenSequence::from_tokens(prompt), opts);
  const OracleTrace gen =
      greedy_generate(model, out.kv, std::move(out.logits.data), params.max_gen, params.eos_id);
  const ImportanceScores oracle = oracle_score(out.trace, gen, params.pool_kernel);

  std::vector<RankCorrelationReport> reports(4);
  const char* names[] = {"Oracle", "GemFilter", "FastKV", "CLAA"};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    reports[i].method = names[i];
    reports[i].prompt_id = prompt_id;
  }

  LayerScoreBuffer buffer(params.agg_window);
  for (std::size_t l = 0; l < layers; ++l) {
    record(reports[0], l, oracle, oracle);
    record(reports[1], l, pool1d(gemfilter_score(out.trace, l), params.pool_kernel), oracle);
    const ImportanceScores window = window_score(out.trace, l, params.window);
    record(reports[2], l, pool1d(window, params.pool_kernel), oracle);
    if (l >= params.first_compressed_layer) {
      buffer.push(window);
      if (buffer.size() == params.agg_window) {
        record(reports[3], l, pool1d(claa_aggregate(buffer), params.pool_kernel), oracle);
      }
    }
  }
  return reports;
}

}  // namespace claa
