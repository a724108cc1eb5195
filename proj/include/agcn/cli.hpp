#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace agcn {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);  // args[0] is the program name

// Worker threads allowed for multi-run commands: AGCN_THREADS when set to a
// positive integer, otherwise the hardware concurrency.
std::size_t thread_budget();

// Runs task(0..count-1) on up to `threads` workers.
void run_parallel(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& task);

}  // namespace agcn
