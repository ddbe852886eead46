#pragma once

#include "steerkit/checkpoint.hpp"
#include "steerkit/collect.hpp"
#include "steerkit/config.hpp"
#include "steerkit/corpus.hpp"
#include "steerkit/direction.hpp"
#include "steerkit/engine.hpp"
#include "steerkit/errors.hpp"
#include "steerkit/evaluation.hpp"
#include "steerkit/model.hpp"
#include "steerkit/rng.hpp"
#include "steerkit/scoring.hpp"
#include "steerkit/steering.hpp"
#include "steerkit/tokenizer.hpp"
