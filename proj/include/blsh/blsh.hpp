#pragma once

#include "blsh/error.hpp"
#include "blsh/matrixio.hpp"
#include "blsh/randsrc.hpp"
#include "blsh/parallel.hpp"
#include "blsh/kernels.hpp"
#include "blsh/rff.hpp"
#include "blsh/hashers.hpp"
#include "blsh/bounds.hpp"
#include "blsh/eval.hpp"
#include "blsh/report.hpp"
#include "blsh/config.hpp"
