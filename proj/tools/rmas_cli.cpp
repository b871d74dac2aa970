#include "rmas.h"

int main(int argc, char** argv) {
  return rmas_run_command(argc - 1,
                          const_cast<const char* const*>(argv + 1));
}
