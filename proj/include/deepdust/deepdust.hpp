#pragma once

#include "deepdust/error.hpp"
#include "deepdust/eval.hpp"
#include "deepdust/features.hpp"
#include "deepdust/hour.hpp"
#include "deepdust/ingest.hpp"
#include "deepdust/loss.hpp"
#include "deepdust/net.hpp"
#include "deepdust/synth.hpp"
#include "deepdust/train.hpp"
