#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "tsgcn/runtime.hpp"

int main(int argc, char** argv) {
  tsgcn::configure_allocator();
  return doctest::Context(argc, argv).run();
}
