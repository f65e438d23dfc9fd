#pragma once

#include "pnpe/audio.hpp"
#include "pnpe/bins.hpp"
#include "pnpe/common.hpp"
#include "pnpe/data.hpp"
#include "pnpe/decode.hpp"
#include "pnpe/dsp.hpp"
#include "pnpe/engine.hpp"
#include "pnpe/eval.hpp"
#include "pnpe/network.hpp"
#include "pnpe/rng.hpp"
#include "pnpe/tensor.hpp"
#include "pnpe/thread_pool.hpp"
#include "pnpe/training.hpp"
