#include <iostream>

#include "muse/cli.hpp"

int main(int argc, char** argv) { return muse::cli::dispatch(argc, argv, std::cout, std::cerr); }
