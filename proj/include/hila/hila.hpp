#pragma once

#include "hila/clp.hpp"
#include "hila/diffcore/adam.hpp"
#include "hila/diffcore/grad_check.hpp"
#include "hila/diffcore/matrix.hpp"
#include "hila/diffcore/var.hpp"
#include "hila/embeddings/discretize.hpp"
#include "hila/embeddings/io.hpp"
#include "hila/embeddings/synthetic.hpp"
#include "hila/embeddings/types.hpp"
#include "hila/error.hpp"
#include "hila/harness/config.hpp"
#include "hila/harness/model.hpp"
#include "hila/harness/reports.hpp"
#include "hila/harness/train.hpp"
#include "hila/mcl.hpp"
#include "hila/metrics.hpp"
#include "hila/opl.hpp"
#include "hila/survival.hpp"
