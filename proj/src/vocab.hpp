#pragma once

// Reserved token layout shared by the synthetic tasks, the agents, and the
// tool stub. Agents may use any vocabulary size >= MIN_VOCAB; ids below
// MIN_VOCAB have the fixed meanings defined here.

#include "common.hpp"

namespace rmas::vocab {

constexpr int PAD = 0;
constexpr int BOS = 1;
constexpr int EOS = 2;

// Role markers, one per agent position in a system (up to 6 agents).
constexpr int ROLE0 = 3;
constexpr int ROLE_COUNT = 6;

constexpr int DIGIT0 = 9;  // 9..18 are digits 0..9

constexpr int PLUS = 19;
constexpr int MINUS = 20;
constexpr int TIMES = 21;

constexpr int SEP = 22;
constexpr int TABLE = 23;
constexpr int ARROW = 24;

constexpr int REV = 25;
constexpr int ASC = 26;
constexpr int DESC = 27;
constexpr int ROTL = 28;

constexpr int TOOL_OPEN = 29;
constexpr int TOOL_CLOSE = 30;
constexpr int TOOL_ERR = 31;

constexpr int VERIFY = 32;
constexpr int LPAREN = 33;
constexpr int RPAREN = 34;

constexpr int MIN_VOCAB = 35;

inline int role(int agent_index) {
  require(agent_index >= 0 && agent_index < ROLE_COUNT, ErrorKind::config,
          "agent index exceeds reserved role markers");
  return ROLE0 + agent_index;
}

inline int digit(int d) {
  require(d >= 0 && d <= 9, ErrorKind::index, "digit token out of range");
  return DIGIT0 + d;
}

inline bool is_digit(int token) { return token >= DIGIT0 && token < DIGIT0 + 10; }
inline int digit_value(int token) {
  require(is_digit(token), ErrorKind::index, "token is not a digit");
  return token - DIGIT0;
}

}  // namespace rmas::vocab
