#include <algorithm>
#include <cstdio>
#include <set>

#include "doctest.h"
#include "tasks.hpp"
#include "vocab.hpp"

using namespace rmas;

namespace {

// Independent evaluators that recompute the answer from the question tokens
// alone, with no access to the generator's internals.

int eval_arith_question(const std::vector<int>& q) {
  REQUIRE(vocab::is_digit(q[0]));
  int v = vocab::digit_value(q[0]);
  std::size_t i = 1;
  while (i + 1 < q.size() + 1 && i < q.size()) {
    int op = q[i];
    int c = vocab::digit_value(q[i + 1]);
    if (op == vocab::PLUS) v = (v + c) % 10;
    else if (op == vocab::MINUS) v = ((v - c) % 10 + 10) % 10;
    else if (op == vocab::TIMES) v = (v * c) % 10;
    else FAIL("unexpected op token");
    i += 2;
  }
  return v;
}

std::vector<int> eval_seq_question(const std::vector<int>& q) {
  std::size_t sep = 0;
  while (sep < q.size() && q[sep] != vocab::SEP) ++sep;
  std::vector<int> list;
  for (std::size_t i = 0; i < sep; ++i) list.push_back(vocab::digit_value(q[i]));
  for (std::size_t i = sep + 1; i < q.size(); ++i) {
    int op = q[i];
    if (op == vocab::REV) std::reverse(list.begin(), list.end());
    else if (op == vocab::ASC) std::sort(list.begin(), list.end());
    else if (op == vocab::DESC) std::sort(list.rbegin(), list.rend());
    else if (op == vocab::ROTL) std::rotate(list.begin(), list.begin() + 1, list.end());
    else FAIL("unexpected op token");
  }
  std::vector<int> out;
  for (int d : list) out.push_back(vocab::digit(d));
  return out;
}

int eval_hop_question(const std::vector<int>& q) {
  REQUIRE(q[0] == vocab::TABLE);
  std::map<int, int> table;
  std::size_t i = 1;
  while (i < q.size() && q[i] != vocab::SEP) {
    REQUIRE(q[i + 1] == vocab::ARROW);
    table[vocab::digit_value(q[i])] = vocab::digit_value(q[i + 2]);
    i += 3;
  }
  ++i;  // SEP
  int cur = vocab::digit_value(q[i]);
  ++i;
  for (; i < q.size(); ++i) {
    REQUIRE(q[i] == vocab::ARROW);
    cur = table.at(cur);
  }
  return cur;
}

std::string tmp_path(const char* stem) {
  return std::string("/tmp/rmas_tasks_") + stem + ".txt";
}

}  // namespace

TEST_CASE("dataset generation is deterministic") {
  TaskSpec spec;
  spec.kind = TaskKind::arith_chain;
  spec.k = 3;
  auto a = generate_dataset(spec, 50, 7, Split::train);
  auto b = generate_dataset(spec, 50, 7, Split::train);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].question == b[i].question);
    CHECK(a[i].answer == b[i].answer);
    CHECK(a[i].steps == b[i].steps);
  }
  auto c = generate_dataset(spec, 50, 8, Split::train);
  bool all_same = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].question != c[i].question) all_same = false;
  CHECK_FALSE(all_same);
}

TEST_CASE("arith chain answers match a direct single-step evaluator at k=1") {
  TaskSpec spec;
  spec.kind = TaskKind::arith_chain;
  spec.k = 1;
  for (const TaskExample& ex : generate_dataset(spec, 100, 3, Split::all)) {
    CHECK(ex.answer.size() == 1);
    CHECK(ex.answer[0] == vocab::digit(eval_arith_question(ex.question)));
    CHECK(ex.steps.size() == 1);
  }
}

TEST_CASE("arith chain k=5: 1000 samples match the independent evaluator") {
  TaskSpec spec;
  spec.kind = TaskKind::arith_chain;
  spec.k = 5;
  for (const TaskExample& ex : generate_dataset(spec, 1000, 91, Split::all)) {
    CHECK(ex.answer[0] == vocab::digit(eval_arith_question(ex.question)));
    CHECK(ex.steps.size() == 5);
    // The final derivation step carries the answer digit.
    CHECK(ex.steps.back().back() == ex.answer[0]);
  }
}

TEST_CASE("seq transform matches the independent list evaluator") {
  TaskSpec spec;
  spec.kind = TaskKind::seq_transform;
  spec.k = 3;
  for (const TaskExample& ex : generate_dataset(spec, 500, 17, Split::all)) {
    CHECK(ex.answer == eval_seq_question(ex.question));
    CHECK(ex.answer.size() == 4);
    CHECK(ex.steps.size() == 3);
    // Each step records the op and the full list after it.
    for (const std::vector<int>& st : ex.steps) CHECK(st.size() == 5);
    std::vector<int> last(ex.steps.back().begin() + 1, ex.steps.back().end());
    CHECK(last == ex.answer);
  }
}

TEST_CASE("multi hop matches the independent table chaser") {
  TaskSpec spec;
  spec.kind = TaskKind::multi_hop;
  spec.k = 4;
  for (const TaskExample& ex : generate_dataset(spec, 500, 29, Split::all)) {
    CHECK(ex.answer[0] == vocab::digit(eval_hop_question(ex.question)));
    CHECK(ex.steps.size() == 4);
    CHECK(ex.steps.back()[1] == ex.answer[0]);
    // Table structure: distinct keys, values within the key set.
    std::set<int> keys;
    std::set<int> vals;
    for (std::size_t i = 1; ex.question[i] != vocab::SEP; i += 3) {
      keys.insert(ex.question[i]);
      vals.insert(ex.question[i + 2]);
    }
    CHECK(keys.size() == 6);
    for (int v : vals) CHECK(keys.count(v) == 1);
  }
}

TEST_CASE("train and test splits are disjoint and self-consistent") {
  TaskSpec spec;
  spec.kind = TaskKind::arith_chain;
  spec.k = 3;
  auto train = generate_dataset(spec, 300, 5, Split::train);
  auto test = generate_dataset(spec, 100, 5, Split::test);
  std::set<std::vector<int>> train_q;
  for (const TaskExample& ex : train) {
    train_q.insert(ex.question);
    CHECK(question_split(ex.question) == Split::train);
  }
  CHECK(train_q.size() == 300);  // questions are distinct
  for (const TaskExample& ex : test) {
    CHECK(question_split(ex.question) == Split::test);
    CHECK(train_q.count(ex.question) == 0);
  }
}

TEST_CASE("all question tokens stay inside the reserved vocabulary") {
  for (TaskKind kind :
       {TaskKind::arith_chain, TaskKind::seq_transform, TaskKind::multi_hop}) {
    TaskSpec spec;
    spec.kind = kind;
    spec.k = 2;
    for (const TaskExample& ex : generate_dataset(spec, 50, 13, Split::all)) {
      for (int t : ex.question) CHECK((t >= 0 && t < vocab::MIN_VOCAB));
      for (int t : ex.answer) CHECK((t >= 0 && t < vocab::MIN_VOCAB));
      for (const auto& st : ex.steps)
        for (int t : st) CHECK((t >= 0 && t < vocab::MIN_VOCAB));
    }
  }
}

TEST_CASE("an impossible dataset request fails with a capacity error") {
  TaskSpec spec;
  spec.kind = TaskKind::arith_chain;
  spec.k = 1;  // only 300 distinct questions exist
  CHECK_THROWS_AS(generate_dataset(spec, 400, 1, Split::all), Error);
}

TEST_CASE("dataset file roundtrip preserves every field") {
  std::vector<TrainExample> ex(2);
  ex[0].question = {vocab::digit(1), vocab::PLUS, vocab::digit(2)};
  ex[0].answer = {vocab::digit(3)};
  ex[0].role_targets["planner"] = {vocab::PLUS, vocab::digit(2), vocab::digit(3)};
  ex[0].role_targets["solver"] = {vocab::digit(3)};
  ex[1].question = {vocab::digit(9)};
  ex[1].answer = {vocab::digit(9)};

  std::string path = tmp_path("roundtrip");
  save_examples(path, ex);
  std::vector<TrainExample> back = load_examples(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].question == ex[0].question);
  CHECK(back[0].answer == ex[0].answer);
  CHECK(back[0].role_targets == ex[0].role_targets);
  CHECK(back[1].role_targets.empty());
  std::remove(path.c_str());
}

TEST_CASE("dataset loader reports the offending line") {
  std::string path = tmp_path("badline");
  {
    FILE* f = fopen(path.c_str(), "wb");
    fputs("1 2\t3\t\n", f);
    fputs("not-an-id\t3\t\n", f);
    fclose(f);
  }
  try {
    load_examples(path);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind == ErrorKind::format);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_examples("/tmp/rmas_tasks_missing_file.txt"), Error);
}
