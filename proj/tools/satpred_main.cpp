#include <iostream>

#include "satpred/app.hpp"

int main(int argc, char** argv) { return satpred::app::run(argc, argv, std::cout, std::cerr); }
