#include <cstdio>
#include "intentspace/intentspace.hpp"
int main() { std::printf("intentspace %s\n", intentspace::kVersion); return 0; }
