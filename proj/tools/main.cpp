// SPDX-License-Identifier: Apache-2.0
#include "qrnn/cli.hpp"

int main(int argc, char** argv) { return qrnn::run_cli(argc, argv); }
