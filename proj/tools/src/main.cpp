#include <iostream>

#include "lenatten_cli/app.hpp"

int main(int argc, char** argv) {
  return lenatten::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
