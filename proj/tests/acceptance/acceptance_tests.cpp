#include <gtest/gtest.h>
TEST(AcceptancePlaceholder, Pending) {}
