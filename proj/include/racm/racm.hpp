#pragma once
// Umbrella header: the whole pipeline in one include.

#include "racm/datagen.hpp"
#include "racm/dataset.hpp"
#include "racm/exact_index.hpp"
#include "racm/fusion.hpp"
#include "racm/ivf_index.hpp"
#include "racm/knn_cache.hpp"
#include "racm/losses.hpp"
#include "racm/model.hpp"
#include "racm/nn/adam.hpp"
#include "racm/nn/dense.hpp"
#include "racm/nn/grad_check.hpp"
#include "racm/nn/param.hpp"
#include "racm/nn/schedule.hpp"
#include "racm/nn/softmax.hpp"
#include "racm/store.hpp"
#include "racm/train.hpp"
