#pragma once

#include "thz/core.hpp"
#include "thz/channel.hpp"
#include "thz/impairments.hpp"
#include "thz/chain.hpp"
#include "thz/modem.hpp"
#include "thz/coding.hpp"
#include "thz/neural.hpp"
#include "thz/stage1.hpp"
#include "thz/stage2.hpp"
#include "thz/experiment.hpp"
