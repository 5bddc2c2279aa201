#pragma once

/// Everything: model, integrator, scenarios, NLP solver, optimal control and run commands.

#include "mabopt/errors.hpp"
#include "mabopt/model.hpp"
#include "mabopt/operating_bounds.hpp"
#include "mabopt/control_grid.hpp"
#include "mabopt/integrator.hpp"
#include "mabopt/scenario.hpp"
#include "mabopt/nlp.hpp"
#include "mabopt/interior_point.hpp"
#include "mabopt/ocp.hpp"
#include "mabopt/toml_subset.hpp"
#include "mabopt/config.hpp"
#include "mabopt/io.hpp"
#include "mabopt/commands.hpp"
