#pragma once

#include "obsforge/common.hpp"
#include "obsforge/json_matrix.hpp"
#include "obsforge/nonlinearity.hpp"
#include "obsforge/system_model.hpp"
#include "obsforge/lmi.hpp"
#include "obsforge/sdp_solver.hpp"
#include "obsforge/synthesis.hpp"
#include "obsforge/estimation.hpp"
#include "obsforge/simulation.hpp"
#include "obsforge/sir.hpp"
#include "obsforge/svg.hpp"
#include "obsforge/demo.hpp"
