#include <doctest.h>

TEST_SUITE_BEGIN("pipeline");
TEST_SUITE_END();
