#pragma once

#include "siavc/augment.hpp"
#include "siavc/core.hpp"
#include "siavc/data_io.hpp"
#include "siavc/losses.hpp"
#include "siavc/model.hpp"
#include "siavc/otsu.hpp"
#include "siavc/rng.hpp"
#include "siavc/sab.hpp"
#include "siavc/tensor.hpp"
#include "siavc/thresholds.hpp"
#include "siavc/trainer.hpp"
#include "siavc/vcam.hpp"
