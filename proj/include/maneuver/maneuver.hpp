#pragma once

#include "maneuver/data_model.hpp"
#include "maneuver/error.hpp"
#include "maneuver/evaluation.hpp"
#include "maneuver/io.hpp"
#include "maneuver/matrix.hpp"
#include "maneuver/nn.hpp"
#include "maneuver/pipeline.hpp"
#include "maneuver/preprocessing.hpp"
#include "maneuver/random.hpp"
#include "maneuver/synthgen.hpp"
#include "maneuver/training.hpp"
