// SPDX-License-Identifier: Apache-2.0
#include "knowagent/cli_report.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return knowagent::run_cli(argc, argv, std::cout, std::cerr);
}
