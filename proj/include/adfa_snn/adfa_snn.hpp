#pragma once

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/config.hpp"
#include "adfa_snn/dataset.hpp"
#include "adfa_snn/error.hpp"
#include "adfa_snn/ga.hpp"
#include "adfa_snn/lif.hpp"
#include "adfa_snn/parallel.hpp"
#include "adfa_snn/rng.hpp"
#include "adfa_snn/sweep.hpp"
#include "adfa_snn/text.hpp"
#include "adfa_snn/topology.hpp"
#include "adfa_snn/trainer.hpp"
