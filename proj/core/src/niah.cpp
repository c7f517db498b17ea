// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "claa/error.hpp"
#include "claa/eval.hpp"
#include "rng.hpp"

namespace claa {

NiahTask gen_niah(std::size_t haystack_len, double depth, std::uint64_t seed,
                  std::size_t vocab_size, std::size_t payload_len) {
  if (!(depth >= 0.0 && depth <= 1.0)) throw InvalidArgument("niah depth must be in [0, 1]");
  if (payload_len == 0) throw InvalidArgument("niah payload must be non-empty");
  const std::size_t needle_len = payload_len + 1;
  const std::size_t query_len = 2;
  if (haystack_len < needle_len + query_len) {
    throw InvalidArgument("haystack_len must be >= needle length + query length");
  }
  const std::size_t mid = vocab_size / 2;
  if (mid <= static_cast<std::size_t>(NiahVocab::kFirstFiller) || vocab_size - mid < 1) {
    throw InvalidArgument("vocab too small for niah token ranges");
  }

  detail::Rng rng(seed);
  NiahTask t;
  t.haystack_len = haystack_len;
  t.depth = depth;
  t.needle_len = needle_len;
  t.needle_start = std::min(haystack_len,
                            static_cast<std::size_t>(std::floor(depth * static_cast<double>(haystack_len))));
  for (std::size_t i = 0; i < payload_len; ++i) {
    t.answer.push_back(static_cast<TokenId>(rng.below(mid, vocab_size)));
  }
  auto filler = [&] {
    return static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(NiahVocab::kFirstFiller), mid));
  };
  t.prompt.reserve(haystack_len + needle_len + query_len);
  for (std::size_t i = 0; i < t.needle_start; ++i) t.prompt.push_back(filler());
  t.prompt.push_back(NiahVocab::kMarker);
  t.prompt.insert(t.prompt.end(), t.answer.begin(), t.answer.end());
  for (std::size_t i = t.needle_start; i < haystack_len; ++i) t.prompt.push_back(filler());
  t.query_start = t.prompt.size();
  t.prompt.push_back(NiahVocab::kQuery);
  t.prompt.push_back(NiahVocab::kMarker);
  return t;
}

int score_exact_match(std::span<const TokenId> generated, std::span<const TokenId> expected) {
  if (expected.empty()) return 1;
  return std::search(generated.begin(), generated.end(), expected.begin(), expected.end()) !=
                 generated.end()
             ? 1
             : 0;
}

}  // namespace claa
