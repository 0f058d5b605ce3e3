#include "doctest.h"
#include "dwcaps/tensor.hpp"
TEST_CASE("smoke"){ dwcaps::Tensor<double> t({2,2}); CHECK(t.size()==4); }
