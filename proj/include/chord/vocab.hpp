#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chord/types.hpp"

namespace chord {

// Token alphabet for the synthetic tasks. Fixed layout:
//   0:BOS 1:EOS 2:<ans> 3:</ans> 4:= 5:say 6:chk 7:copy 8:rev 9:sum 10..:digits
// The four reserved ids (BOS, EOS, answer delimiters) are required by the
// reward grammar; the rest are task markers and filler for the expert styles.
class Vocab {
 public:
  // payload_base = number of digit symbols (the payload alphabet).
  static Vocab with_base(int payload_base);

  int size() const { return static_cast<int>(names_.size()); }
  int base() const { return base_; }

  Token bos() const { return 0; }
  Token eos() const { return 1; }
  Token ans_open() const { return 2; }
  Token ans_close() const { return 3; }
  Token sep() const { return 4; }
  Token say() const { return 5; }
  Token chk() const { return 6; }
  Token kind_copy() const { return 7; }
  Token kind_reverse() const { return 8; }
  Token kind_sum() const { return 9; }

  Token digit(int value) const;
  bool is_digit(Token t) const { return t >= 10 && t < 10 + base_; }
  int digit_value(Token t) const;  // -1 when t is not a digit

  const std::string& name(Token t) const;
  Token id(const std::string& name) const;  // throws ConfigError on unknown symbol
  bool contains(Token t) const { return t >= 0 && t < size(); }

  // FNV-1a over the ordered symbol names; embedded in dataset and checkpoint headers.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> names_;
  int base_ = 0;
};

}  // namespace chord
