#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chord/types.hpp"
#include "chord/vocab.hpp"

namespace chord {

enum class TaskKind { copy, reverse, modular_sum };

const char* task_kind_name(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

enum class ExpertStyle { terse, verbose_verify };

const char* expert_style_name(ExpertStyle s);
ExpertStyle parse_expert_style(const std::string& s);

// One verifiable task. The prompt is BOS <kind> payload... '=' and the answer
// is a deterministic function of the payload.
struct TaskInstance {
  TaskKind kind = TaskKind::copy;
  int difficulty = 1;  // payload length
  TokenSeq prompt;
  TokenSeq answer;

  bool operator==(const TaskInstance&) const = default;
};

struct ExpertExample {
  TokenSeq prompt;
  TokenSeq response;  // ends with EOS, carries the delimited answer
  ExpertStyle style = ExpertStyle::terse;

  bool operator==(const ExpertExample&) const = default;
};

struct DatasetSplit {
  std::vector<ExpertExample> sft;
  std::vector<TaskInstance> rl;
  std::vector<TaskInstance> eval;

  bool operator==(const DatasetSplit&) const = default;
};

struct SplitSizes {
  int sft = 0;
  int rl = 0;
  int eval = 0;
};

// Deterministic task generation; prompts within one call are pairwise distinct.
// Throws ConfigError when the difficulty cannot be encoded within max_prompt_len
// or when count exceeds the number of distinct payloads base^difficulty.
std::vector<TaskInstance> generate_tasks(const Vocab& vocab, TaskKind kind, int count,
                                         int difficulty, std::uint64_t seed,
                                         int max_prompt_len = 32);

// Ground-truth answer for a payload under a task kind.
TokenSeq solve(const Vocab& vocab, TaskKind kind, const TokenSeq& payload);

// Payload slice of a task prompt (tokens between the kind marker and '=').
TokenSeq prompt_payload(const TaskInstance& instance);

// Reward-correct demonstration for one instance. Terse style is the minimal
// delimited answer; verbose-verify restates the payload and repeats the answer
// through 2-3 check segments before the delimited answer, which makes it at
// least twice as long as the terse form.
ExpertExample expert_response(const Vocab& vocab, const TaskInstance& instance, ExpertStyle style,
                              std::uint64_t seed);

// Shuffle-and-partition into disjoint SFT / RL / eval sets. expert must be
// parallel to tasks (matching prompts); duplicate prompts are collapsed before
// partitioning so the disjointness invariant is on prompt identity.
DatasetSplit split_dataset(const std::vector<TaskInstance>& tasks,
                           const std::vector<ExpertExample>& expert, SplitSizes sizes,
                           std::uint64_t seed);

// Line-based dataset file, see README for the exact record grammar.
void save_split(const Vocab& vocab, const DatasetSplit& split, const std::string& path);
DatasetSplit load_split(const Vocab& vocab, const std::string& path);

// Reads the payload base from the file header and rebuilds the vocab.
std::pair<Vocab, DatasetSplit> load_split_file(const std::string& path);

}  // namespace chord
