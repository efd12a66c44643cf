#pragma once

namespace ibcaan {

// Entry point behind the `ibcaan` binary. Subcommands: gen-data, train,
// eval, ablate, report. Returns 0 on success, 1 on usage errors, 2 on data
// errors. The IBCAAN_SEED environment variable overrides the configured
// seed for train and ablate.
int cli_main(int argc, const char* const* argv);

}  // namespace ibcaan
