// SPDX-License-Identifier: Apache-2.0
#include "relalign/cli.hpp"

int main(int argc, char** argv) { return relalign::run_command(argc, argv); }
