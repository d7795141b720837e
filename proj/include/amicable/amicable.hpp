#pragma once

#include "amicable/corpus.hpp"
#include "amicable/datagen.hpp"
#include "amicable/error.hpp"
#include "amicable/experiments.hpp"
#include "amicable/fft.hpp"
#include "amicable/log.hpp"
#include "amicable/metrics.hpp"
#include "amicable/parallel.hpp"
#include "amicable/perturb.hpp"
#include "amicable/report.hpp"
#include "amicable/robustness.hpp"
#include "amicable/runtime.hpp"
#include "amicable/separator.hpp"
#include "amicable/stft.hpp"
#include "amicable/tensor.hpp"
#include "amicable/wave.hpp"
