#pragma once

// Umbrella header.

#include "muse/common.hpp"
#include "muse/random.hpp"
#include "muse/corpus.hpp"
#include "muse/sparse.hpp"
#include "muse/transitions.hpp"
#include "muse/augment.hpp"
#include "muse/autograd.hpp"
#include "muse/model.hpp"
#include "muse/encoder.hpp"
#include "muse/losses.hpp"
#include "muse/eval.hpp"
#include "muse/trainer.hpp"
#include "muse/synth.hpp"
