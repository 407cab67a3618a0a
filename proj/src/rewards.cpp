#include "chord/rewards.hpp"

namespace chord {

void RewardRule::validate() const {
  if (!(correct > format_only && format_only > malformed && malformed > over_length)) {
    throw ConfigError("reward hierarchy must satisfy correct > format_only > malformed > over_length");
  }
  if (length_limit < 1) {
    throw ConfigError("reward length_limit must be >= 1");
  }
}

bool is_well_formed(const Vocab& vocab, const TokenSeq& response) {
  if (response.empty() || response.back() != vocab.eos()) {
    return false;
  }
  int opens = 0;
  int closes = 0;
  std::size_t open_pos = 0;
  std::size_t close_pos = 0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const Token t = response[i];
    if (t == vocab.eos() && i + 1 != response.size()) {
      return false;  // EOS may only terminate
    }
    if (t == vocab.ans_open()) {
      ++opens;
      open_pos = i;
    } else if (t == vocab.ans_close()) {
      ++closes;
      close_pos = i;
    }
  }
  return opens == 1 && closes == 1 && close_pos > open_pos + 1;
}

std::optional<TokenSeq> extract_answer(const Vocab& vocab, const TokenSeq& response) {
  if (!is_well_formed(vocab, response)) {
    return std::nullopt;
  }
  std::size_t open_pos = 0;
  std::size_t close_pos = 0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    if (response[i] == vocab.ans_open()) {
      open_pos = i;
    } else if (response[i] == vocab.ans_close()) {
      close_pos = i;
    }
  }
  return TokenSeq(response.begin() + static_cast<long>(open_pos) + 1,
                  response.begin() + static_cast<long>(close_pos));
}

double score(const Vocab& vocab, const RewardRule& rule, const TaskInstance& instance,
             const TokenSeq& response) {
  const bool over = static_cast<int>(response.size()) > rule.length_limit;
  if (over && rule.over_length_dominates) {
    return rule.over_length;
  }
  if (const auto answer = extract_answer(vocab, response)) {
    if (*answer == instance.answer) {
      return rule.correct;
    }
    return over ? rule.over_length : rule.format_only;
  }
  return over ? rule.over_length : rule.malformed;
}

}  // namespace chord
