#include "chord/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "chord/rng.hpp"

namespace chord {
namespace {

// base^exp saturated at a large sentinel, for the distinct-prompt capacity check.
std::uint64_t pow_sat(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > UINT64_MAX / base) {
      return UINT64_MAX;
    }
    r *= base;
  }
  return r;
}

Token kind_token(const Vocab& v, TaskKind k) {
  switch (k) {
    case TaskKind::copy:
      return v.kind_copy();
    case TaskKind::reverse:
      return v.kind_reverse();
    case TaskKind::modular_sum:
      return v.kind_sum();
  }
  throw std::logic_error("bad task kind");
}

void append_ids(std::string& out, const TokenSeq& seq) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) {
      out += ' ';
    }
    out += std::to_string(seq[i]);
  }
}

TokenSeq parse_ids(const Vocab& vocab, const std::string& field, long line) {
  TokenSeq out;
  std::istringstream in(field);
  long id = 0;
  while (in >> id) {
    if (id < 0 || id >= vocab.size()) {
      throw ParseError("token id " + std::to_string(id) + " outside vocab", line);
    }
    out.push_back(static_cast<Token>(id));
  }
  if (!in.eof()) {
    throw ParseError("malformed token id list: '" + field + "'", line);
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& record_line, long line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t bar = record_line.find('|', start);
    if (bar == std::string::npos) {
      fields.push_back(record_line.substr(start));
      break;
    }
    fields.push_back(record_line.substr(start, bar - start));
    start = bar + 1;
  }
  if (fields.size() < 2) {
    throw ParseError("record has no '|' separated fields", line);
  }
  return fields;
}

}  // namespace

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::copy:
      return "copy";
    case TaskKind::reverse:
      return "reverse";
    case TaskKind::modular_sum:
      return "modular-sum";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "modular-sum") return TaskKind::modular_sum;
  throw ConfigError("unknown task kind: " + s + " (expected copy|reverse|modular-sum)");
}

const char* expert_style_name(ExpertStyle s) {
  return s == ExpertStyle::terse ? "terse" : "verbose-verify";
}

ExpertStyle parse_expert_style(const std::string& s) {
  if (s == "terse") return ExpertStyle::terse;
  if (s == "verbose-verify") return ExpertStyle::verbose_verify;
  throw ConfigError("unknown expert style: " + s + " (expected terse|verbose-verify)");
}

TokenSeq solve(const Vocab& vocab, TaskKind kind, const TokenSeq& payload) {
  TokenSeq answer;
  switch (kind) {
    case TaskKind::copy:
      answer = payload;
      break;
    case TaskKind::reverse:
      answer.assign(payload.rbegin(), payload.rend());
      break;
    case TaskKind::modular_sum: {
      long sum = 0;
      for (Token t : payload) {
        sum += vocab.digit_value(t);
      }
      answer = {vocab.digit(static_cast<int>(sum % vocab.base()))};
      break;
    }
  }
  return answer;
}

TokenSeq prompt_payload(const TaskInstance& instance) {
  // prompt = BOS <kind> payload... '='
  if (instance.prompt.size() < 3) {
    throw std::invalid_argument("task prompt too short to carry a payload");
  }
  return TokenSeq(instance.prompt.begin() + 2, instance.prompt.end() - 1);
}

std::vector<TaskInstance> generate_tasks(const Vocab& vocab, TaskKind kind, int count,
                                         int difficulty, std::uint64_t seed, int max_prompt_len) {
  if (count < 1) {
    throw ConfigError("task count must be >= 1");
  }
  if (difficulty < 1) {
    throw ConfigError("task difficulty must be >= 1");
  }
  const int prompt_len = difficulty + 3;
  if (prompt_len > max_prompt_len) {
    throw ConfigError("difficulty " + std::to_string(difficulty) + " needs prompt length " +
                      std::to_string(prompt_len) + " > max prompt length " +
                      std::to_string(max_prompt_len));
  }
  const std::uint64_t capacity = pow_sat(static_cast<std::uint64_t>(vocab.base()), difficulty);
  if (static_cast<std::uint64_t>(count) > capacity) {
    throw ConfigError("cannot generate " + std::to_string(count) + " distinct prompts; base " +
                      std::to_string(vocab.base()) + " difficulty " + std::to_string(difficulty) +
                      " admits only " + std::to_string(capacity));
  }

  Rng rng(derive_seed(seed, {kStreamTasks, static_cast<std::uint64_t>(kind),
                             static_cast<std::uint64_t>(difficulty)}));
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  std::set<TokenSeq> seen;
  while (out.size() < static_cast<std::size_t>(count)) {
    TokenSeq payload(static_cast<std::size_t>(difficulty));
    for (Token& t : payload) {
      t = vocab.digit(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab.base()))));
    }
    TaskInstance instance;
    instance.kind = kind;
    instance.difficulty = difficulty;
    instance.prompt.push_back(vocab.bos());
    instance.prompt.push_back(kind_token(vocab, kind));
    instance.prompt.insert(instance.prompt.end(), payload.begin(), payload.end());
    instance.prompt.push_back(vocab.sep());
    if (!seen.insert(instance.prompt).second) {
      continue;  // duplicate payload, redraw
    }
    instance.answer = solve(vocab, kind, payload);
    out.push_back(std::move(instance));
  }
  return out;
}

ExpertExample expert_response(const Vocab& vocab, const TaskInstance& instance, ExpertStyle style,
                              std::uint64_t seed) {
  ExpertExample ex;
  ex.prompt = instance.prompt;
  ex.style = style;
  const TokenSeq& ans = instance.answer;
  if (style == ExpertStyle::verbose_verify) {
    const TokenSeq payload = prompt_payload(instance);
    Rng rng(derive_seed(seed, {kStreamExpert}));
    const int verify_segments = 2 + static_cast<int>(rng.next_below(2));
    ex.response.push_back(vocab.say());
    ex.response.insert(ex.response.end(), payload.begin(), payload.end());
    for (int i = 0; i < verify_segments; ++i) {
      ex.response.push_back(vocab.chk());
      ex.response.insert(ex.response.end(), ans.begin(), ans.end());
    }
  }
  ex.response.push_back(vocab.ans_open());
  ex.response.insert(ex.response.end(), ans.begin(), ans.end());
  ex.response.push_back(vocab.ans_close());
  ex.response.push_back(vocab.eos());
  return ex;
}

DatasetSplit split_dataset(const std::vector<TaskInstance>& tasks,
                           const std::vector<ExpertExample>& expert, SplitSizes sizes,
                           std::uint64_t seed) {
  if (sizes.sft < 0 || sizes.rl < 0 || sizes.eval < 0) {
    throw ConfigError("split sizes must be non-negative");
  }
  if (expert.size() != tasks.size()) {
    throw ConfigError("expert list must parallel the task list (" + std::to_string(expert.size()) +
                      " vs " + std::to_string(tasks.size()) + ")");
  }
  std::vector<std::size_t> order;
  std::set<TokenSeq> seen;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (expert[i].prompt != tasks[i].prompt) {
      throw ConfigError("expert[" + std::to_string(i) + "] prompt does not match its task");
    }
    if (seen.insert(tasks[i].prompt).second) {
      order.push_back(i);
    }
  }
  const std::size_t need =
      static_cast<std::size_t>(sizes.sft) + static_cast<std::size_t>(sizes.rl) +
      static_cast<std::size_t>(sizes.eval);
  if (need > order.size()) {
    throw ConfigError("split sizes sum to " + std::to_string(need) + " but only " +
                      std::to_string(order.size()) + " distinct prompts are available");
  }

  Rng rng(derive_seed(seed, {kStreamSplit}));
  rng.shuffle(order);

  DatasetSplit split;
  std::size_t cursor = 0;
  for (int i = 0; i < sizes.sft; ++i) {
    split.sft.push_back(expert[order[cursor++]]);
  }
  for (int i = 0; i < sizes.rl; ++i) {
    split.rl.push_back(tasks[order[cursor++]]);
  }
  for (int i = 0; i < sizes.eval; ++i) {
    split.eval.push_back(tasks[order[cursor++]]);
  }
  return split;
}

namespace {

// Structural expert-response check used when loading untrusted files: the
// delimited span must equal the answer recomputed from the prompt.
void check_expert_record(const Vocab& vocab, const ExpertExample& ex, TaskKind kind, long line) {
  if (ex.response.empty() || ex.response.back() != vocab.eos()) {
    throw ParseError("expert response does not end with EOS", line);
  }
  const auto open = std::find(ex.response.begin(), ex.response.end(), vocab.ans_open());
  const auto close = std::find(ex.response.begin(), ex.response.end(), vocab.ans_close());
  if (open == ex.response.end() || close == ex.response.end() || close <= open + 1) {
    throw ParseError("expert response lacks a delimited answer", line);
  }
  TaskInstance shim;
  shim.prompt = ex.prompt;
  const TokenSeq payload = prompt_payload(shim);
  const TokenSeq want = solve(vocab, kind, payload);
  if (TokenSeq(open + 1, close) != want) {
    throw ParseError("expert response answer disagrees with the prompt's ground truth", line);
  }
}

struct RecordHead {
  TaskKind kind;
  int difficulty;
  std::string style;
};

RecordHead parse_head(const std::string& field, long line) {
  std::istringstream in(field);
  std::string kind_s, style_s;
  int difficulty = 0;
  if (!(in >> kind_s >> difficulty >> style_s)) {
    throw ParseError("bad record head: '" + field + "'", line);
  }
  RecordHead head;
  try {
    head.kind = parse_task_kind(kind_s);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), line);
  }
  head.difficulty = difficulty;
  head.style = style_s;
  return head;
}

}  // namespace

void save_split(const Vocab& vocab, const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot open for writing: " + path);
  }
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(vocab.hash()));
  out << "#chord-split v=1 vocab=" << hash_hex << " base=" << vocab.base()
      << " sft=" << split.sft.size() << " rl=" << split.rl.size() << " eval=" << split.eval.size()
      << "\n";
  auto head_of = [&](const TokenSeq& prompt) {
    // kind marker sits right after BOS; payload length = prompt size - 3
    TaskKind kind = TaskKind::copy;
    if (prompt.size() >= 2) {
      if (prompt[1] == vocab.kind_reverse()) kind = TaskKind::reverse;
      if (prompt[1] == vocab.kind_sum()) kind = TaskKind::modular_sum;
    }
    return kind;
  };
  for (const ExpertExample& ex : split.sft) {
    TaskInstance shim;
    shim.prompt = ex.prompt;
    const TokenSeq answer = solve(vocab, head_of(ex.prompt), prompt_payload(shim));
    std::string rec = "S ";
    rec += task_kind_name(head_of(ex.prompt));
    rec += ' ';
    rec += std::to_string(static_cast<int>(ex.prompt.size()) - 3);
    rec += ' ';
    rec += expert_style_name(ex.style);
    rec += " | ";
    append_ids(rec, ex.prompt);
    rec += " | ";
    append_ids(rec, answer);
    rec += " | ";
    append_ids(rec, ex.response);
    out << rec << "\n";
  }
  auto write_task = [&](const TaskInstance& t, char tag) {
    std::string rec(1, tag);
    rec += ' ';
    rec += task_kind_name(t.kind);
    rec += ' ';
    rec += std::to_string(t.difficulty);
    rec += " - | ";
    append_ids(rec, t.prompt);
    rec += " | ";
    append_ids(rec, t.answer);
    out << rec << "\n";
  };
  for (const TaskInstance& t : split.rl) {
    write_task(t, 'R');
  }
  for (const TaskInstance& t : split.eval) {
    write_task(t, 'E');
  }
  if (!out) {
    throw ConfigError("write failed: " + path);
  }
}

namespace {

struct Header {
  std::uint64_t vocab_hash = 0;
  int base = 0;
  std::size_t sft = 0, rl = 0, eval = 0;
};

Header parse_header(const std::string& line_text) {
  Header h;
  std::istringstream in(line_text);
  std::string magic;
  in >> magic;
  if (magic != "#chord-split") {
    throw ParseError("missing #chord-split header", 1);
  }
  std::string kv;
  bool saw_version = false;
  while (in >> kv) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ParseError("bad header field: " + kv, 1);
    }
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      if (key == "v") {
        if (std::stoi(val) != 1) {
          throw ParseError("unsupported schema version " + val, 1);
        }
        saw_version = true;
      } else if (key == "vocab") {
        h.vocab_hash = std::stoull(val, nullptr, 16);
      } else if (key == "base") {
        h.base = std::stoi(val);
      } else if (key == "sft") {
        h.sft = std::stoul(val);
      } else if (key == "rl") {
        h.rl = std::stoul(val);
      } else if (key == "eval") {
        h.eval = std::stoul(val);
      } else {
        throw ParseError("unknown header key: " + key, 1);
      }
    } catch (const std::invalid_argument&) {
      throw ParseError("bad header value for " + key + ": " + val, 1);
    } catch (const std::out_of_range&) {
      throw ParseError("header value out of range for " + key + ": " + val, 1);
    }
  }
  if (!saw_version || h.base == 0) {
    throw ParseError("header missing v= or base=", 1);
  }
  return h;
}

DatasetSplit load_split_impl(const Vocab& vocab, const Header& header, std::istream& in) {
  DatasetSplit split;
  std::set<TokenSeq> sft_prompts, rl_prompts, eval_prompts;
  long line = 1;
  std::string text;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) {
      continue;
    }
    if (text[0] != 'S' && text[0] != 'R' && text[0] != 'E') {
      throw ParseError("unknown record tag '" + text.substr(0, 1) + "'", line);
    }
    const char tag = text[0];
    const std::vector<std::string> fields = split_fields(text.substr(1), line);
    const RecordHead head = parse_head(fields[0], line);
    if (tag == 'S') {
      if (fields.size() != 4) {
        throw ParseError("S record needs 4 fields, got " + std::to_string(fields.size()), line);
      }
      ExpertExample ex;
      ex.prompt = parse_ids(vocab, fields[1], line);
      const TokenSeq answer = parse_ids(vocab, fields[2], line);
      ex.response = parse_ids(vocab, fields[3], line);
      try {
        ex.style = parse_expert_style(head.style);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line);
      }
      check_expert_record(vocab, ex, head.kind, line);
      if (!sft_prompts.insert(ex.prompt).second) {
        throw ParseError("duplicate sft prompt", line);
      }
      split.sft.push_back(std::move(ex));
    } else {
      if (fields.size() != 3) {
        throw ParseError("task record needs 3 fields, got " + std::to_string(fields.size()), line);
      }
      TaskInstance t;
      t.kind = head.kind;
      t.difficulty = head.difficulty;
      t.prompt = parse_ids(vocab, fields[1], line);
      t.answer = parse_ids(vocab, fields[2], line);
      if (static_cast<int>(t.prompt.size()) != t.difficulty + 3) {
        throw ParseError("prompt length disagrees with difficulty", line);
      }
      if (t.answer != solve(vocab, t.kind, prompt_payload(t))) {
        throw ParseError("stored answer disagrees with the prompt's ground truth", line);
      }
      auto& prompts = (tag == 'R') ? rl_prompts : eval_prompts;
      if (!prompts.insert(t.prompt).second) {
        throw ParseError("duplicate prompt within a split", line);
      }
      (tag == 'R' ? split.rl : split.eval).push_back(std::move(t));
    }
  }
  if (split.sft.size() != header.sft || split.rl.size() != header.rl ||
      split.eval.size() != header.eval) {
    throw ParseError("record counts disagree with header (file truncated?)", line);
  }
  for (const ExpertExample& ex : split.sft) {
    if (rl_prompts.count(ex.prompt) || eval_prompts.count(ex.prompt)) {
      throw ParseError("sft prompt overlaps another split", line);
    }
  }
  for (const TaskInstance& t : split.rl) {
    if (eval_prompts.count(t.prompt)) {
      throw ParseError("rl prompt overlaps eval split", line);
    }
  }
  return split;
}

}  // namespace

DatasetSplit load_split(const Vocab& vocab, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open dataset: " + path);
  }
  std::string first;
  if (!std::getline(in, first)) {
    throw ParseError("empty dataset file", 1);
  }
  const Header header = parse_header(first);
  if (header.vocab_hash != vocab.hash()) {
    throw ParseError("vocab hash mismatch (file was generated with a different vocab)", 1);
  }
  return load_split_impl(vocab, header, in);
}

std::pair<Vocab, DatasetSplit> load_split_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open dataset: " + path);
  }
  std::string first;
  if (!std::getline(in, first)) {
    throw ParseError("empty dataset file", 1);
  }
  const Header header = parse_header(first);
  Vocab vocab = Vocab::with_base(header.base);
  if (header.vocab_hash != vocab.hash()) {
    throw ParseError("vocab hash mismatch (file was generated with a different vocab)", 1);
  }
  DatasetSplit split = load_split_impl(vocab, header, in);
  return {std::move(vocab), std::move(split)};
}

}  // namespace chord
