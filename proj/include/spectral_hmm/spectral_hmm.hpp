#pragma once

#include "spectral_hmm/errors.hpp"
#include "spectral_hmm/linalg.hpp"
#include "spectral_hmm/random.hpp"
#include "spectral_hmm/moments.hpp"
#include "spectral_hmm/hmm.hpp"
#include "spectral_hmm/learner.hpp"
#include "spectral_hmm/inference.hpp"
#include "spectral_hmm/recovery.hpp"
#include "spectral_hmm/evaluation.hpp"
#include "spectral_hmm/io.hpp"
