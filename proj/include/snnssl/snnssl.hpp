#pragma once

#include "backprop.hpp"
#include "config.hpp"
#include "core.hpp"
#include "encoding.hpp"
#include "mnist.hpp"
#include "pipeline.hpp"
#include "presentation.hpp"
#include "random.hpp"
#include "rate_model.hpp"
#include "stdp.hpp"
