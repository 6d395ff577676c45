#pragma once

// Umbrella header.

#include "freqrand/config.hpp"
#include "freqrand/error.hpp"
#include "freqrand/freq.hpp"
#include "freqrand/histmatch.hpp"
#include "freqrand/image.hpp"
#include "freqrand/model.hpp"
#include "freqrand/png_io.hpp"
#include "freqrand/randomize.hpp"
#include "freqrand/rng.hpp"
#include "freqrand/spectrum_analysis.hpp"
#include "freqrand/spectrum_learning.hpp"
#include "freqrand/spectrum_mask.hpp"
#include "freqrand/stats.hpp"
#include "freqrand/toy.hpp"
#include "freqrand/train.hpp"
