// Umbrella header.

#pragma once

#include "irsce/cdrn.hpp"
#include "irsce/channel_model.hpp"
#include "irsce/complex_matrix.hpp"
#include "irsce/config.hpp"
#include "irsce/dataset.hpp"
#include "irsce/estimators.hpp"
#include "irsce/grad_check.hpp"
#include "irsce/nn_layers.hpp"
#include "irsce/optimizer.hpp"
#include "irsce/parallel.hpp"
#include "irsce/pilot_protocol.hpp"
#include "irsce/rng.hpp"
#include "irsce/serialize.hpp"
#include "irsce/sweep.hpp"
#include "irsce/tensor.hpp"
