#include "chord/vocab.hpp"

#include <stdexcept>

namespace chord {

Vocab Vocab::with_base(int payload_base) {
  if (payload_base < 2) {
    throw ConfigError("vocab payload base must be >= 2, got " + std::to_string(payload_base));
  }
  Vocab v;
  v.base_ = payload_base;
  v.names_ = {"BOS", "EOS", "<ans>", "</ans>", "=", "say", "chk", "copy", "rev", "sum"};
  for (int d = 0; d < payload_base; ++d) {
    v.names_.push_back("d" + std::to_string(d));
  }
  return v;
}

Token Vocab::digit(int value) const {
  if (value < 0 || value >= base_) {
    throw std::out_of_range("digit value " + std::to_string(value) + " outside base " +
                            std::to_string(base_));
  }
  return static_cast<Token>(10 + value);
}

int Vocab::digit_value(Token t) const { return is_digit(t) ? t - 10 : -1; }

const std::string& Vocab::name(Token t) const {
  if (!contains(t)) {
    throw std::out_of_range("token id " + std::to_string(t) + " outside vocab");
  }
  return names_[static_cast<std::size_t>(t)];
}

Token Vocab::id(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      return static_cast<Token>(i);
    }
  }
  throw ConfigError("unknown vocab symbol: " + name);
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& s : names_) {
    for (char c : s) {
      h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    }
    h = (h ^ 0x0a) * 0x100000001b3ULL;  // record separator
  }
  return h;
}

}  // namespace chord
