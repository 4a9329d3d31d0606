#pragma once

// Everything at once.
#include "bcfl/cli.hpp"
#include "bcfl/config.hpp"
#include "bcfl/dataio.hpp"
#include "bcfl/fl_sim.hpp"
#include "bcfl/fss.hpp"
#include "bcfl/ledger.hpp"
#include "bcfl/neuralnet.hpp"
#include "bcfl/ring.hpp"
#include "bcfl/secure_agg.hpp"
#include "bcfl/secure_inference.hpp"
#include "bcfl/sharing.hpp"
