#pragma once

#include "whar/ops_conv.hpp"
#include "whar/ops_core.hpp"
#include "whar/ops_matmul.hpp"
#include "whar/ops_reduce.hpp"
#include "whar/ops_scan.hpp"
