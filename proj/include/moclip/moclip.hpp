#pragma once

#include "moclip/ablation.hpp"
#include "moclip/checkpoint.hpp"
#include "moclip/config.hpp"
#include "moclip/dataset.hpp"
#include "moclip/encoders.hpp"
#include "moclip/errors.hpp"
#include "moclip/losses.hpp"
#include "moclip/manifest.hpp"
#include "moclip/metrics.hpp"
#include "moclip/model.hpp"
#include "moclip/motion.hpp"
#include "moclip/nn.hpp"
#include "moclip/ops.hpp"
#include "moclip/optim.hpp"
#include "moclip/rng.hpp"
#include "moclip/skeleton.hpp"
#include "moclip/tensor.hpp"
#include "moclip/trainer.hpp"
#include "moclip/vocab.hpp"
