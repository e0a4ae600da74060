#pragma once

#include "cyclequil/equilibrium.hpp"
#include "cyclequil/manifest.hpp"
#include "cyclequil/network.hpp"
#include "cyclequil/queue_solver.hpp"
#include "cyclequil/simulation.hpp"
#include "cyclequil/version.hpp"
