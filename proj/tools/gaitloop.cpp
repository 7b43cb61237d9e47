// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/cli.hpp"

int main(int argc, char** argv) { return gaitloop::cli::run_cli(argc, argv); }
