#pragma once
// Command-line entry point. Subcommands: synth-data, train-phase1,
// train-phase2, generate, freq analyze, evaluate, sweep freq|trunc|emblocks.
// Returns the process exit code: 0 on success, 2 for invalid input, 3 for
// invalid/corrupt checkpoints, 1 for other runtime failures.
namespace cgan {

int run_cli(int argc, const char* const* argv);

}  // namespace cgan
