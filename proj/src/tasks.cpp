#include "tasks.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "vocab.hpp"

namespace rmas {

const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::arith_chain: return "arith_chain";
    case TaskKind::seq_transform: return "seq_transform";
    case TaskKind::multi_hop: return "multi_hop";
  }
  fail(ErrorKind::config, "unknown task kind");
}

TaskKind task_from_name(const std::string& name) {
  if (name == "arith_chain") return TaskKind::arith_chain;
  if (name == "seq_transform") return TaskKind::seq_transform;
  if (name == "multi_hop") return TaskKind::multi_hop;
  fail(ErrorKind::config, "unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  require(k >= 1, ErrorKind::config, "task step count k must be >= 1");
  require(list_len >= 2 && list_len <= 10, ErrorKind::config,
          "list_len must be in [2, 10]");
  require(table_size >= 2 && table_size <= 10, ErrorKind::config,
          "table_size must be in [2, 10]");
}

Split question_split(const std::vector<int>& question) {
  std::uint64_t h = fnv1a64(question.data(), question.size() * sizeof(int));
  return h % 5 == 4 ? Split::test : Split::train;
}

namespace {

const int kArithOps[] = {vocab::PLUS, vocab::MINUS, vocab::TIMES};
const int kSeqOps[] = {vocab::REV, vocab::ASC, vocab::DESC, vocab::ROTL};

int arith_step(int v, int op, int c) {
  if (op == vocab::PLUS) return (v + c) % 10;
  if (op == vocab::MINUS) return ((v - c) % 10 + 10) % 10;
  return (v * c) % 10;
}

TaskExample gen_arith(const TaskSpec& spec, Rng& rng) {
  TaskExample ex;
  int v = static_cast<int>(rng.below(10));
  ex.question.push_back(vocab::digit(v));
  for (int s = 0; s < spec.k; ++s) {
    int op = kArithOps[rng.below(3)];
    int c = static_cast<int>(rng.below(10));
    v = arith_step(v, op, c);
    ex.question.push_back(op);
    ex.question.push_back(vocab::digit(c));
    ex.steps.push_back({op, vocab::digit(c), vocab::digit(v)});
  }
  ex.answer = {vocab::digit(v)};
  return ex;
}

void seq_step(std::vector<int>& list, int op) {
  if (op == vocab::REV) {
    std::reverse(list.begin(), list.end());
  } else if (op == vocab::ASC) {
    std::sort(list.begin(), list.end());
  } else if (op == vocab::DESC) {
    std::sort(list.begin(), list.end(), std::greater<int>());
  } else {
    std::rotate(list.begin(), list.begin() + 1, list.end());
  }
}

TaskExample gen_seq(const TaskSpec& spec, Rng& rng) {
  TaskExample ex;
  std::vector<int> list(spec.list_len);
  for (int& d : list) d = static_cast<int>(rng.below(10));
  for (int d : list) ex.question.push_back(vocab::digit(d));
  ex.question.push_back(vocab::SEP);
  for (int s = 0; s < spec.k; ++s) {
    int op = kSeqOps[rng.below(4)];
    ex.question.push_back(op);
    seq_step(list, op);
    std::vector<int> step = {op};
    for (int d : list) step.push_back(vocab::digit(d));
    ex.steps.push_back(std::move(step));
  }
  for (int d : list) ex.answer.push_back(vocab::digit(d));
  return ex;
}

TaskExample gen_hop(const TaskSpec& spec, Rng& rng) {
  TaskExample ex;
  // Distinct keys; values drawn from the key set so hop chains never leave it.
  std::vector<int> pool = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  for (int i = 9; i > 0; --i)
    std::swap(pool[i], pool[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  std::vector<int> keys(pool.begin(), pool.begin() + spec.table_size);
  std::vector<int> vals(spec.table_size);
  for (int i = 0; i < spec.table_size; ++i)
    vals[i] = keys[rng.below(static_cast<std::uint64_t>(spec.table_size))];

  ex.question.push_back(vocab::TABLE);
  for (int i = 0; i < spec.table_size; ++i) {
    ex.question.push_back(vocab::digit(keys[i]));
    ex.question.push_back(vocab::ARROW);
    ex.question.push_back(vocab::digit(vals[i]));
  }
  int cur = keys[rng.below(static_cast<std::uint64_t>(spec.table_size))];
  ex.question.push_back(vocab::SEP);
  ex.question.push_back(vocab::digit(cur));
  for (int s = 0; s < spec.k; ++s) ex.question.push_back(vocab::ARROW);

  for (int s = 0; s < spec.k; ++s) {
    for (int i = 0; i < spec.table_size; ++i)
      if (keys[i] == cur) {
        cur = vals[i];
        break;
      }
    ex.steps.push_back({vocab::ARROW, vocab::digit(cur)});
  }
  ex.answer = {vocab::digit(cur)};
  return ex;
}

TaskExample gen_one(const TaskSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case TaskKind::arith_chain: return gen_arith(spec, rng);
    case TaskKind::seq_transform: return gen_seq(spec, rng);
    case TaskKind::multi_hop: return gen_hop(spec, rng);
  }
  fail(ErrorKind::config, "unknown task kind");
}

}  // namespace

std::vector<TaskExample> generate_dataset(const TaskSpec& spec, int size,
                                          std::uint64_t seed, Split split) {
  spec.validate();
  require(size >= 1, ErrorKind::config, "dataset size must be >= 1");
  Rng rng(seed);
  std::vector<TaskExample> out;
  std::set<std::vector<int>> seen;
  long long attempts = std::max(1000LL * size, 100000LL);
  while (static_cast<int>(out.size()) < size && attempts-- > 0) {
    TaskExample ex = gen_one(spec, rng);
    if (split != Split::all && question_split(ex.question) != split) continue;
    if (!seen.insert(ex.question).second) continue;
    out.push_back(std::move(ex));
  }
  require(static_cast<int>(out.size()) == size, ErrorKind::capacity,
          "question space exhausted: got " + std::to_string(out.size()) +
              " of " + std::to_string(size) + " requested examples");
  return out;
}

namespace {

void write_ids(std::ostream& os, const std::vector<int>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ' ';
    os << ids[i];
  }
}

std::vector<int> parse_ids(const std::string& field, int line_no) {
  std::vector<int> out;
  std::istringstream is(field);
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      int v = std::stoi(tok, &used);
      require(used == tok.size(), ErrorKind::format, "trailing characters");
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorKind::format, "line " + std::to_string(line_no) +
                                  ": bad token id '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

void save_examples(const std::string& path, const std::vector<TrainExample>& ex) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
  for (const TrainExample& e : ex) {
    write_ids(os, e.question);
    os << '\t';
    write_ids(os, e.answer);
    os << '\t';
    bool first = true;
    for (const auto& [role, ids] : e.role_targets) {
      if (!first) os << ';';
      first = false;
      os << role << '=';
      write_ids(os, ids);
    }
    os << '\n';
  }
  require(os.good(), ErrorKind::io, "write to '" + path + "' failed");
}

std::vector<TrainExample> load_examples(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open '" + path + "'");
  std::vector<TrainExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    require(fields.size() == 3, ErrorKind::format,
            "line " + std::to_string(line_no) + ": expected 3 tab-separated " +
                "fields, got " + std::to_string(fields.size()));
    TrainExample e;
    e.question = parse_ids(fields[0], line_no);
    e.answer = parse_ids(fields[1], line_no);
    require(!e.question.empty() && !e.answer.empty(), ErrorKind::format,
            "line " + std::to_string(line_no) + ": empty question or answer");
    if (!fields[2].empty()) {
      std::istringstream rs(fields[2]);
      std::string entry;
      while (std::getline(rs, entry, ';')) {
        std::size_t eq = entry.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::format,
                "line " + std::to_string(line_no) + ": bad role entry '" +
                    entry + "'");
        e.role_targets[entry.substr(0, eq)] = parse_ids(entry.substr(eq + 1), line_no);
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace rmas
