#pragma once

#include "nbsopt/catalog.hpp"
#include "nbsopt/clustering.hpp"
#include "nbsopt/engine.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/grid.hpp"
#include "nbsopt/instance.hpp"
#include "nbsopt/kernel.hpp"
#include "nbsopt/model.hpp"
#include "nbsopt/mps.hpp"
#include "nbsopt/report.hpp"
#include "nbsopt/solver.hpp"
