#pragma once

#include "pae/error.hpp"
#include "pae/numerics.hpp"
#include "pae/datagen.hpp"
#include "pae/neuralnet.hpp"
#include "pae/paired.hpp"
#include "pae/linear_pae.hpp"
#include "pae/variational.hpp"
#include "pae/inversion.hpp"
#include "pae/ood_metrics.hpp"
#include "pae/csv.hpp"
#include "pae/config.hpp"
#include "pae/checkpoint.hpp"
