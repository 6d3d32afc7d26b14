#pragma once

#include "svcsel/allocator.hpp"
#include "svcsel/csv.hpp"
#include "svcsel/error.hpp"
#include "svcsel/information.hpp"
#include "svcsel/kernels.hpp"
#include "svcsel/lasso.hpp"
#include "svcsel/linalg.hpp"
#include "svcsel/mbo.hpp"
#include "svcsel/model.hpp"
#include "svcsel/optim.hpp"
#include "svcsel/parallel.hpp"
#include "svcsel/pmle.hpp"
#include "svcsel/predict_cv.hpp"
#include "svcsel/simstudy.hpp"
