#pragma once

// Umbrella header for the whole library.

#include "lgtse/common/error.hpp"
#include "lgtse/common/fft.hpp"
#include "lgtse/common/rng.hpp"
#include "lgtse/common/tensor.hpp"

#include "lgtse/dsp/drc.hpp"
#include "lgtse/dsp/erb.hpp"
#include "lgtse/dsp/stft.hpp"
#include "lgtse/dsp/waveform.hpp"

#include "lgtse/io/npy.hpp"
#include "lgtse/io/ppm.hpp"
#include "lgtse/io/wav.hpp"

#include "lgtse/ad/graph.hpp"
#include "lgtse/ad/ops.hpp"

#include "lgtse/guidance/context.hpp"

#include "lgtse/metrics/report.hpp"
#include "lgtse/metrics/si_sdr.hpp"
#include "lgtse/metrics/stoi.hpp"

#include "lgtse/data/corpus.hpp"
#include "lgtse/data/manifest.hpp"
#include "lgtse/data/mix.hpp"
#include "lgtse/data/synth.hpp"

#include "lgtse/nets/backbone.hpp"
#include "lgtse/nets/denoiser.hpp"
#include "lgtse/nets/gru.hpp"
#include "lgtse/nets/params.hpp"

#include "lgtse/augment/batch.hpp"
#include "lgtse/augment/offline.hpp"
#include "lgtse/augment/strategy.hpp"

#include "lgtse/train/adam.hpp"
#include "lgtse/train/checkpoint.hpp"
#include "lgtse/train/pipeline.hpp"
#include "lgtse/train/plan.hpp"
#include "lgtse/train/schedule.hpp"
#include "lgtse/train/trainer.hpp"
#include "lgtse/train/visualize.hpp"
