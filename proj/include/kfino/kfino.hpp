#pragma once

#include "kfino/em.hpp"
#include "kfino/errors.hpp"
#include "kfino/filter.hpp"
#include "kfino/gaussian.hpp"
#include "kfino/io.hpp"
#include "kfino/kalman.hpp"
#include "kfino/synth.hpp"
#include "kfino/wow_model.hpp"
