// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace qrnn {

/// Entry point of the `qrnn` command-line tool. Returns 0 on success, 2 on usage errors and 1
/// on runtime failures.
int run_cli(int argc, char** argv);

}  // namespace qrnn
