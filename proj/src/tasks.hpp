#pragma once

// Deterministic synthetic question generators whose ground truth requires
// exactly k composition steps, plus the line-based dataset file format used
// by the training and evaluation workflows.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"

namespace rmas {

enum class TaskKind { arith_chain, seq_transform, multi_hop };

const char* task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::arith_chain;
  int k = 3;           // composition steps in the derivation
  int list_len = 4;    // seq_transform working-list length
  int table_size = 6;  // multi_hop table entries
  void validate() const;
};

struct TaskExample {
  std::vector<int> question;
  std::vector<std::vector<int>> steps;  // k derivation step token groups
  std::vector<int> answer;
};

enum class Split { train, test, all };

// Hash partition of the question space: buckets 0-3 train, bucket 4 test.
Split question_split(const std::vector<int>& question);

// Deterministic for (spec, size, seed, split); questions are distinct within
// a dataset and train/test are disjoint by construction.
std::vector<TaskExample> generate_dataset(const TaskSpec& spec, int size,
                                          std::uint64_t seed, Split split);

// One training record: question/answer plus per-role supervision targets.
struct TrainExample {
  std::vector<int> question;
  std::vector<int> answer;
  std::map<std::string, std::vector<int>> role_targets;
};

// Line format, LF endings: "q ids TAB a ids TAB role=ids;role=ids" with ids
// space-separated decimals. The third field may be empty.
void save_examples(const std::string& path, const std::vector<TrainExample>& ex);
std::vector<TrainExample> load_examples(const std::string& path);

}  // namespace rmas
