#pragma once

#include "mfmerton/closed_form.hpp"
#include "mfmerton/config.hpp"
#include "mfmerton/delay_sde.hpp"
#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"
#include "mfmerton/parallel.hpp"
#include "mfmerton/rng.hpp"
#include "mfmerton/spectral.hpp"
#include "mfmerton/stats.hpp"
#include "mfmerton/verify.hpp"
