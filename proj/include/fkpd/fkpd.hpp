// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header.

#include "fkpd/numeric/adam.hpp"
#include "fkpd/numeric/dense_array.hpp"
#include "fkpd/numeric/errors.hpp"
#include "fkpd/numeric/mlp.hpp"
#include "fkpd/numeric/rng.hpp"
#include "fkpd/numeric/tape.hpp"

#include "fkpd/diffusion/checkpoint.hpp"
#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/diffusion/sampler.hpp"
#include "fkpd/diffusion/schedule.hpp"

#include "fkpd/policy/dmse.hpp"
#include "fkpd/policy/segment.hpp"

#include "fkpd/losses/alignment.hpp"
#include "fkpd/losses/preference_model.hpp"

#include "fkpd/data/dataset.hpp"
#include "fkpd/data/io.hpp"
#include "fkpd/data/preference_pair.hpp"
#include "fkpd/data/teacher.hpp"

#include "fkpd/envs/mixture.hpp"
#include "fkpd/envs/point_mass.hpp"

#include "fkpd/harness/config.hpp"
#include "fkpd/harness/datagen.hpp"
#include "fkpd/harness/evaluate.hpp"
#include "fkpd/harness/gradcheck.hpp"
#include "fkpd/harness/pipeline.hpp"
#include "fkpd/harness/report.hpp"
#include "fkpd/harness/train.hpp"
