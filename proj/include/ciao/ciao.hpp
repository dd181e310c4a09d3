#pragma once

#include "ciao/autodiff.hpp"
#include "ciao/config.hpp"
#include "ciao/data.hpp"
#include "ciao/encoder.hpp"
#include "ciao/errors.hpp"
#include "ciao/gradcheck.hpp"
#include "ciao/gradcheck_suite.hpp"
#include "ciao/grid.hpp"
#include "ciao/labels.hpp"
#include "ciao/losses.hpp"
#include "ciao/mask.hpp"
#include "ciao/metrics.hpp"
#include "ciao/model.hpp"
#include "ciao/ops.hpp"
#include "ciao/optim.hpp"
#include "ciao/pretrain.hpp"
#include "ciao/saliency.hpp"
#include "ciao/tensor.hpp"
#include "ciao/train.hpp"
