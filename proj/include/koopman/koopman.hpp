#pragma once

#include "koopman/analysis.hpp"
#include "koopman/dictionary.hpp"
#include "koopman/dynamics.hpp"
#include "koopman/edmd.hpp"
#include "koopman/error.hpp"
#include "koopman/expression.hpp"
#include "koopman/ingest.hpp"
#include "koopman/parallel.hpp"
#include "koopman/reproduce.hpp"
#include "koopman/rng.hpp"
#include "koopman/systems.hpp"
#include "koopman/trajectory_io.hpp"
#include "koopman/types.hpp"
