#pragma once

// Umbrella header: design and verification toolkit for distributed state
// observers of discrete-time LTI systems in Jordan canonical form.

#include "distobs/canon.hpp"
#include "distobs/classify.hpp"
#include "distobs/config.hpp"
#include "distobs/design.hpp"
#include "distobs/linalg.hpp"
#include "distobs/model.hpp"
#include "distobs/random_instance.hpp"
#include "distobs/sim.hpp"
#include "distobs/solvability.hpp"
#include "distobs/verify.hpp"
