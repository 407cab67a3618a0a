#pragma once

#include <optional>

#include "chord/corpus.hpp"
#include "chord/types.hpp"
#include "chord/vocab.hpp"

namespace chord {

// Hierarchical verifiable reward. Defaults follow the usual RLVR convention:
// correct answers earn the maximum, format-only attempts are neutral,
// unformatted junk is mildly penalized and over-length responses strongly so.
struct RewardRule {
  double correct = 1.0;
  double format_only = 0.0;
  double malformed = -0.1;
  double over_length = -1.0;
  int length_limit = 64;
  // When true (default) the length check runs before everything else, so a
  // correct-but-overlong response still earns the over-length penalty.
  bool over_length_dominates = true;

  void validate() const;  // enforces correct > format_only > malformed > over_length
};

// True iff the response is: any non-delimiter tokens, exactly one answer-open,
// a nonempty delimiter-free span, exactly one answer-close, any non-delimiter
// tokens, terminating EOS (and EOS nowhere else).
bool is_well_formed(const Vocab& vocab, const TokenSeq& response);

// Tokens strictly between the delimiters, when the response is well-formed.
std::optional<TokenSeq> extract_answer(const Vocab& vocab, const TokenSeq& response);

double score(const Vocab& vocab, const RewardRule& rule, const TaskInstance& instance,
             const TokenSeq& response);

}  // namespace chord
