#pragma once

// Umbrella header for the selective fixed-filter ANC toolkit.

#include "sfanc/adaptive.hpp"
#include "sfanc/augment.hpp"
#include "sfanc/base64.hpp"
#include "sfanc/classifier.hpp"
#include "sfanc/config.hpp"
#include "sfanc/database.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/esc50.hpp"
#include "sfanc/fft.hpp"
#include "sfanc/harness.hpp"
#include "sfanc/io.hpp"
#include "sfanc/mel.hpp"
#include "sfanc/meta.hpp"
#include "sfanc/noise.hpp"
#include "sfanc/pipeline.hpp"
#include "sfanc/resample.hpp"
#include "sfanc/rng.hpp"
#include "sfanc/signal.hpp"
#include "sfanc/wav.hpp"
